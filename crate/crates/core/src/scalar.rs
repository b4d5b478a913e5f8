//! Element type abstraction: every tensor, signal buffer and model runs in one
//! floating-point precision end to end, selectable between `f32` and `f64`.

use num_traits::Float;

/// Floating-point element of tensors and DSP buffers.
///
/// Gradient checks require `f64`; training at scale prefers `f32`. Code is
/// generic over this trait so a run picks one precision and keeps it.
pub trait Scalar:
    Float
    + Default
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + std::ops::AddAssign
    + Send
    + Sync
    + 'static
{
    /// Width of the little-endian on-disk encoding in bytes.
    const BYTES: usize;
    /// Short precision name used in file headers ("f32" / "f64").
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    /// Decode from exactly `Self::BYTES` little-endian bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const NAME: &'static str = "f32";

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("f32 needs 4 bytes"))
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const NAME: &'static str = "f64";

    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("f64 needs 8 bytes"))
    }
}
