//! Frame files.
//!
//! Each frame is a pair of files:
//!
//! * `frame_NNNNN.bin`: one little-endian record per particle,
//!   `phase: u8, position: f64×d, velocity: f64×d, mass: f64, absorbed: f64`,
//!   where phase is 0 for fluid and 1 for solid;
//! * `frame_NNNNN.txt`: `frame`, `time`, `dim` and `count` as `key value` lines.
//!
//! An optional `frame_NNNNN.csv` mirrors the binary records in text.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::state::{Particle, Phase};

/// One decoded particle record.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub phase: Phase,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub mass: f64,
    pub absorbed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameHeader {
    pub frame: usize,
    pub time: f64,
    pub dim: usize,
    pub count: usize,
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `<dir>/<name>.bin`, `.txt` and optionally `.csv`.
pub fn write_frame<const D: usize>(
    dir: &Path,
    name: &str,
    frame: usize,
    time: f64,
    particles: &[Particle<D>],
    csv: bool,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(write_err(dir))?;
    let stem = dir.join(name);

    let bin = stem.with_extension("bin");
    let mut buf = Vec::with_capacity(particles.len() * (1 + 8 * (2 * D + 2)));
    for p in particles {
        buf.push(p.phase.as_u8());
        for x in p.position.iter().chain(&p.velocity) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        buf.extend_from_slice(&p.mass.to_le_bytes());
        buf.extend_from_slice(&p.absorbed_fluid_mass.to_le_bytes());
    }
    fs::write(&bin, &buf).map_err(write_err(&bin))?;

    let txt = stem.with_extension("txt");
    let header = format!("frame {frame}\ntime {time:.16e}\ndim {D}\ncount {}\n", particles.len());
    fs::write(&txt, header).map_err(write_err(&txt))?;

    if csv {
        let path = stem.with_extension("csv");
        let file = File::create(&path).map_err(write_err(&path))?;
        let mut w = BufWriter::new(file);
        let axes = &["x", "y", "z"][..D];
        let mut cols = vec!["phase".to_string()];
        cols.extend(axes.iter().map(|a| a.to_string()));
        cols.extend(axes.iter().map(|a| format!("v{a}")));
        cols.extend(["mass".to_string(), "absorbed".to_string()]);
        writeln!(w, "{}", cols.join(",")).map_err(write_err(&path))?;
        for p in particles {
            let mut line = p.phase.as_u8().to_string();
            for x in p.position.iter().chain(&p.velocity) {
                line.push_str(&format!(",{x:.16e}"));
            }
            line.push_str(&format!(",{:.16e},{:.16e}", p.mass, p.absorbed_fluid_mass));
            writeln!(w, "{line}").map_err(write_err(&path))?;
        }
        w.flush().map_err(write_err(&path))?;
    }
    Ok(())
}

/// Reads a frame written by [`write_frame`], given its `.bin` path.
pub fn read_frame(bin: &Path) -> Result<(FrameHeader, Vec<FrameRecord>)> {
    let io = |source| Error::Io {
        path: bin.to_path_buf(),
        source,
    };
    let bad = |message: String| Error::MalformedOutput {
        path: bin.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(bin.with_extension("txt")).map_err(io)?;
    let mut fields = std::collections::HashMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once(' ') {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| fields.get(k).cloned().ok_or_else(|| bad(format!("header lacks '{k}'")));
    let header = FrameHeader {
        frame: get("frame")?.parse().map_err(|_| bad("bad frame".into()))?,
        time: get("time")?.parse().map_err(|_| bad("bad time".into()))?,
        dim: get("dim")?.parse().map_err(|_| bad("bad dim".into()))?,
        count: get("count")?.parse().map_err(|_| bad("bad count".into()))?,
    };

    let mut bytes = Vec::new();
    File::open(bin)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io)?;
    let d = header.dim;
    let size = 1 + 8 * (2 * d + 2);
    if bytes.len() != size * header.count {
        return Err(bad(format!(
            "expected {} bytes, found {}",
            size * header.count,
            bytes.len()
        )));
    }
    let records = bytes
        .chunks_exact(size)
        .map(|r| {
            let f = |k: usize| f64::from_le_bytes(r[1 + 8 * k..9 + 8 * k].try_into().unwrap());
            FrameRecord {
                phase: if r[0] == 0 { Phase::Fluid } else { Phase::Solid },
                position: (0..d).map(f).collect(),
                velocity: (d..2 * d).map(f).collect(),
                mass: f(2 * d),
                absorbed: f(2 * d + 1),
            }
        })
        .collect();
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Particle::solid([0.25, 0.5], [1.0, -2.0], 0.5, 1);
        s.absorbed_fluid_mass = 0.125;
        let ps = vec![Particle::fluid([0.1, 0.2], [0.3, 0.4], 1.5, 1), s];
        write_frame(dir.path(), "frame_00003", 3, 0.75, &ps, true).unwrap();
        let (h, recs) = read_frame(&dir.path().join("frame_00003.bin")).unwrap();
        assert_eq!(
            h,
            FrameHeader {
                frame: 3,
                time: 0.75,
                dim: 2,
                count: 2
            }
        );
        assert_eq!(recs[1].phase, Phase::Solid);
        assert_eq!(recs[1].velocity, vec![1.0, -2.0]);
        assert_eq!(recs[1].absorbed, 0.125);
        assert_eq!(recs[0].mass, 1.5);
        let bytes = fs::metadata(dir.path().join("frame_00003.bin")).unwrap().len();
        assert_eq!(bytes, 2 * (1 + 8 * 6));
        let csv = fs::read_to_string(dir.path().join("frame_00003.csv")).unwrap();
        assert!(csv.starts_with("phase,x,y,vx,vy,mass,absorbed\n0,"));
    }
}
