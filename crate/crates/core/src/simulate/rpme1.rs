//! The RPME1 snapshot stream.
//!
//! Little-endian throughout: the magic `RPME1`, then `u32` dimension,
//! `u32` cells per axis, `u32` snapshot count, `u64` seed, `u64` path id,
//! `f64` time step; then per snapshot an `f64` time followed by the `c` and
//! `y` arrays over `Ōʰ` in row-major order. An optional Malliavin section
//! follows: a `u32` record count, then per record `f64` r, `f64` t and the
//! `D_r c`, `D_r y` arrays.

use std::io::{Read, Write};

use super::Trajectory;
use crate::grid::GridSpec;
use crate::{Error, Result};

const MAGIC: &[u8; 5] = b"RPME1";

/// Malliavin derivatives of one path at one `(r, t)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinRecord {
    pub r: f64,
    pub t: f64,
    pub drc: Vec<f64>,
    pub dry: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rpme1Snapshot {
    pub t: f64,
    pub c: Vec<f64>,
    pub y: Vec<f64>,
}

/// Decoded RPME1 stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Rpme1 {
    pub grid: GridSpec,
    pub seed: u64,
    pub path_id: u64,
    pub dt: f64,
    pub snapshots: Vec<Rpme1Snapshot>,
    pub malliavin: Option<Vec<MalliavinRecord>>,
}

fn put_f64s(w: &mut impl Write, xs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * xs.len());
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("{what} {n} does not fit in u32")))
}

/// Writes `traj` (and optionally Malliavin records) as RPME1.
pub fn write_rpme1(
    w: &mut impl Write,
    traj: &Trajectory,
    malliavin: Option<&[MalliavinRecord]>,
) -> Result<()> {
    let g = traj.grid;
    w.write_all(MAGIC)?;
    w.write_all(&to_u32(g.dim(), "dimension")?.to_le_bytes())?;
    w.write_all(&to_u32(g.cells_per_axis(), "cells")?.to_le_bytes())?;
    w.write_all(&to_u32(traj.snapshots.len(), "snapshot count")?.to_le_bytes())?;
    w.write_all(&traj.seed.to_le_bytes())?;
    w.write_all(&traj.path_id.to_le_bytes())?;
    w.write_all(&traj.dt.to_le_bytes())?;
    for s in &traj.snapshots {
        w.write_all(&s.t.to_le_bytes())?;
        put_f64s(w, s.c.values())?;
        put_f64s(w, s.y.values())?;
    }
    if let Some(records) = malliavin {
        w.write_all(&to_u32(records.len(), "record count")?.to_le_bytes())?;
        for rec in records {
            if rec.drc.len() != g.len() || rec.dry.len() != g.len() {
                return Err(Error::GridMismatch);
            }
            w.write_all(&rec.r.to_le_bytes())?;
            w.write_all(&rec.t.to_le_bytes())?;
            put_f64s(w, &rec.drc)?;
            put_f64s(w, &rec.dry)?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Format("array too long".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect())
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Reads an RPME1 stream written by [`write_rpme1`].
pub fn read_rpme1(r: &mut impl Read) -> Result<Rpme1> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let dim = cur.u32()? as usize;
    let cells = cur.u32()? as usize;
    let grid = GridSpec::new(dim, cells).map_err(|e| Error::Format(e.to_string()))?;
    let count = cur.u32()? as usize;
    let seed = cur.u64()?;
    let path_id = cur.u64()?;
    let dt = cur.f64()?;
    let n = grid.len();
    let mut snapshots = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let t = cur.f64()?;
        let c = cur.f64s(n)?;
        let y = cur.f64s(n)?;
        snapshots.push(Rpme1Snapshot { t, c, y });
    }
    let malliavin = if cur.at_end() {
        None
    } else {
        let records = cur.u32()? as usize;
        let mut out = Vec::with_capacity(records.min(1 << 20));
        for _ in 0..records {
            let r = cur.f64()?;
            let t = cur.f64()?;
            let drc = cur.f64s(n)?;
            let dry = cur.f64s(n)?;
            out.push(MalliavinRecord { r, t, drc, dry });
        }
        if !cur.at_end() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        Some(out)
    };
    Ok(Rpme1 {
        grid,
        seed,
        path_id,
        dt,
        snapshots,
        malliavin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::model::{CoefficientSet, Diffusion};
    use crate::simulate::{simulate_path, InitialData, SimulationConfig};

    fn sample() -> Trajectory {
        let g = build_grid(2, 3).unwrap();
        let mut coeffs = CoefficientSet::default();
        coeffs.a = Diffusion::Linear { sigma: 0.2 };
        let mut config = SimulationConfig::new(g, coeffs);
        config.c0 = InitialData::Sine { amplitude: 0.3 };
        config.y0 = InitialData::Constant(1.0);
        config.t_final = 0.05;
        simulate_path(&config, 4, 2).unwrap()
    }

    #[test]
    fn header_layout_and_round_trip() {
        let traj = sample();
        let mut buf = Vec::new();
        write_rpme1(&mut buf, &traj, None).unwrap();
        assert_eq!(&buf[..5], b"RPME1");
        assert_eq!(u32::from_le_bytes(buf[5..9].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[9..13].try_into().unwrap()), 3);
        let n_snap = traj.snapshots.len();
        assert_eq!(buf.len(), 5 + 12 + 16 + 8 + n_snap * (8 + 2 * 25 * 8));
        let back = read_rpme1(&mut buf.as_slice()).unwrap();
        assert_eq!(back.seed, 4);
        assert_eq!(back.path_id, 2);
        assert_eq!(back.dt, traj.dt);
        assert!(back.malliavin.is_none());
        for (a, b) in back.snapshots.iter().zip(&traj.snapshots) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.c, b.c.values());
            assert_eq!(a.y, b.y.values());
        }
    }

    #[test]
    fn malliavin_section_round_trip() {
        let traj = sample();
        let rec = MalliavinRecord {
            r: 0.01,
            t: 0.05,
            drc: vec![0.5; 25],
            dry: (0..25).map(|i| i as f64).collect(),
        };
        let mut buf = Vec::new();
        write_rpme1(&mut buf, &traj, Some(std::slice::from_ref(&rec))).unwrap();
        let back = read_rpme1(&mut buf.as_slice()).unwrap();
        assert_eq!(back.malliavin.unwrap(), vec![rec]);
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_rpme1(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
        assert!(read_rpme1(&mut &b"RPME2"[..]).is_err());
    }
}
