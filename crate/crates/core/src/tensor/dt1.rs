//! `DT1` tensor blobs: magic `DT1\n`, little-endian `u32` rank, `u32` dims,
//! then the row-major `f32` payload in little-endian order.

use std::io::{Read, Write};

use super::Tensor;
use crate::error::{Error, Result};

pub const DT1_MAGIC: &[u8; 4] = b"DT1\n";

pub fn write_dt1<W: Write>(tensor: &Tensor, mut out: W) -> Result<()> {
    out.write_all(DT1_MAGIC)?;
    out.write_all(&(tensor.rank() as u32).to_le_bytes())?;
    for &d in tensor.shape() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut payload = Vec::with_capacity(tensor.numel() * 4);
    for v in tensor.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&payload)?;
    Ok(())
}

pub fn read_dt1<R: Read>(mut input: R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|e| Error::Parse(format!("DT1 header: {e}")))?;
    if &magic != DT1_MAGIC {
        return Err(Error::Parse(format!("bad DT1 magic {magic:?}")));
    }
    let rank = read_u32(&mut input)? as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::Parse(format!("unsupported DT1 rank {rank}")));
    }
    let shape = (0..rank).map(|_| read_u32(&mut input).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let numel = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n > 0 && n <= 1 << 31)
        .ok_or_else(|| Error::Parse(format!("implausible DT1 shape {shape:?}")))?;
    let mut bytes = vec![0u8; numel * 4];
    input.read_exact(&mut bytes).map_err(|e| Error::Parse(format!("DT1 payload {shape:?}: {e}")))?;
    let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    Tensor::new(shape, data)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b).map_err(|e| Error::Parse(format!("DT1 header: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_dt1(&t, &mut buf).unwrap();
        let mut expect = b"DT1\n".to_vec();
        expect.extend_from_slice(&[2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(buf, expect);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let t = Tensor::full(&[3, 3], 1.0);
        let mut buf = Vec::new();
        write_dt1(&t, &mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(read_dt1(&buf[..]).is_err());
        assert!(read_dt1(&b"DT2\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(shape in proptest::collection::vec(1usize..5, 1..4), seed in any::<u32>()) {
            let t = Tensor::from_fn(&shape, |i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32) & 0x7f7f_ffff));
            let mut buf = Vec::new();
            write_dt1(&t, &mut buf).unwrap();
            prop_assert_eq!(read_dt1(&buf[..]).unwrap(), t);
        }
    }
}
