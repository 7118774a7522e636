//! Binary plan file.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic       [u8; 4]   "BVP2"
//! version     u16
//! order       u8        flat voxel order tag (0 = z, y, x)
//! reserved    u8        0
//! N D H W C   u32 x 5   C = 0 accepts any channel count
//! nx ny nz    u32 x 3
//! P M         u32 x 2
//! digest      u64       FNV-1a over the arrays below
//! ranks_depth u32 x P
//! ranks_feat  u32 x P
//! ranks_bev   u32 x P
//! starts      u32 x M
//! lengths     u32 x M
//! ```

use crate::error::{CodecError, PlanError};
use crate::plan::{validate_plan, FlatOrder, PlanMeta, PoolingPlan};

pub const MAGIC: [u8; 4] = *b"BVP2";
pub const FORMAT_VERSION: u16 = 1;
/// Size of everything before the arrays.
pub const HEADER_BYTES: usize = 4 + 2 + 1 + 1 + 4 * 10 + 8;

pub fn serialize_plan(plan: &PoolingPlan) -> Vec<u8> {
    let p = plan.num_points();
    let m = plan.num_intervals();
    let mut out = Vec::with_capacity(HEADER_BYTES + 12 * p + 8 * m);
    let meta = &plan.meta;
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(meta.order.tag());
    out.push(0);
    for v in [
        meta.num_views,
        meta.depth_bins,
        meta.height,
        meta.width,
        meta.channels,
        meta.grid_dims[0],
        meta.grid_dims[1],
        meta.grid_dims[2],
        p as u32,
        m as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&meta.digest.to_le_bytes());
    for array in [
        &plan.ranks_depth,
        &plan.ranks_feat,
        &plan.ranks_bev,
        &plan.interval_starts,
        &plan.interval_lengths,
    ] {
        for v in array.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(
            CodecError::Truncated {
                needed: self.pos.saturating_add(n),
                available: self.bytes.len(),
            },
        )?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>, CodecError> {
        let raw = self.take(n.checked_mul(4).ok_or(CodecError::Truncated {
            needed: usize::MAX,
            available: self.bytes.len(),
        })?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn deserialize_plan(bytes: &[u8]) -> Result<PoolingPlan, CodecError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(CodecError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CodecError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let order_tag = r.take(2)?[0];
    let order = FlatOrder::from_tag(order_tag).ok_or(CodecError::UnknownOrder(order_tag))?;
    let mut header = [0u32; 10];
    for slot in header.iter_mut() {
        *slot = r.u32()?;
    }
    let [num_views, depth_bins, height, width, channels, nx, ny, nz, p, m] = header;
    let digest = u64::from_le_bytes(r.take(8)?.try_into().unwrap());

    let (p, m) = (p as usize, m as usize);
    let needed = HEADER_BYTES + 12 * p + 8 * m;
    if bytes.len() < needed {
        return Err(CodecError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    let plan = PoolingPlan {
        ranks_depth: r.u32s(p)?,
        ranks_feat: r.u32s(p)?,
        ranks_bev: r.u32s(p)?,
        interval_starts: r.u32s(m)?,
        interval_lengths: r.u32s(m)?,
        meta: PlanMeta {
            num_views,
            depth_bins,
            height,
            width,
            channels,
            grid_dims: [nx, ny, nz],
            order,
            digest,
        },
    };
    if r.pos != bytes.len() {
        return Err(CodecError::TrailingBytes(bytes.len() - r.pos));
    }
    let computed = plan.content_digest();
    if computed != digest {
        return Err(CodecError::DigestMismatch {
            stored: digest,
            computed,
        });
    }
    let violations = validate_plan(&plan);
    if let Some(first) = violations.first() {
        return Err(PlanError::Invalid(first.to_string()).into());
    }
    Ok(plan)
}
