//! File formats: WFD1 field dumps, MLP1 checkpoints, sensor and
//! measurement CSVs and 8-bit PGM heatmaps.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::fdtd::{FdtdError, FieldSequence, GridSpec};
use crate::grad::Tensor;
use crate::oracle::{Measurements, OracleError, SensorSet};
use crate::siren::{Layer, MlpParams, SirenError};

pub const FIELD_MAGIC: &[u8; 4] = b"WFD1";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MLP1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    Magic { found: [u8; 4], expected: [u8; 4] },
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Fdtd(#[from] FdtdError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Siren(#[from] SirenError),
}

fn read_magic(r: &mut impl Read, expected: &[u8; 4]) -> Result<(), IoError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if &found != expected {
        return Err(IoError::Magic {
            found,
            expected: *expected,
        });
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn write_f64s(w: &mut impl Write, values: &[f64]) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn to_u32(n: usize, what: &str) -> Result<u32, IoError> {
    u32::try_from(n).map_err(|_| IoError::Format(format!("{what} {n} exceeds u32")))
}

fn expect_eof(r: &mut impl Read) -> Result<(), IoError> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(()),
        _ => Err(IoError::Format("trailing bytes".into())),
    }
}

pub fn write_field(w: &mut impl Write, field: &FieldSequence) -> Result<(), IoError> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&to_u32(field.n_frames(), "frame count")?.to_le_bytes())?;
    w.write_all(&to_u32(field.spec.m, "grid size")?.to_le_bytes())?;
    w.write_all(&field.spec.dr.to_le_bytes())?;
    w.write_all(&field.dt.to_le_bytes())?;
    write_f64s(w, field.data())?;
    Ok(())
}

/// Reads a field dump; the grid origin is taken to be `(0, 0)`.
pub fn read_field(r: &mut impl Read) -> Result<FieldSequence, IoError> {
    read_magic(r, FIELD_MAGIC)?;
    let n_frames = read_u32(r)? as usize;
    let m = read_u32(r)? as usize;
    let dr = read_f64(r)?;
    let dt = read_f64(r)?;
    let data = read_f64s(r, n_frames * m * m)?;
    expect_eof(r)?;
    let spec = GridSpec {
        m,
        dr,
        origin: (0.0, 0.0),
    };
    Ok(FieldSequence::new(spec, dt, n_frames, data)?)
}

pub fn save_field(path: &Path, field: &FieldSequence) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, field)?;
    Ok(w.flush()?)
}

pub fn load_field(path: &Path) -> Result<FieldSequence, IoError> {
    read_field(&mut BufReader::new(File::open(path)?))
}

/// Layers are written as stored, `rows = fan_in`, `cols = fan_out`.
pub fn write_params(w: &mut impl Write, params: &MlpParams) -> Result<(), IoError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&to_u32(params.layers.len(), "layer count")?.to_le_bytes())?;
    for layer in &params.layers {
        let (rows, cols) = layer
            .weight
            .dims2()
            .ok_or_else(|| IoError::Format("weight is not a matrix".into()))?;
        w.write_all(&to_u32(rows, "rows")?.to_le_bytes())?;
        w.write_all(&to_u32(cols, "cols")?.to_le_bytes())?;
        write_f64s(w, layer.weight.data())?;
        write_f64s(w, layer.bias.data())?;
    }
    w.write_all(&params.omega0.to_le_bytes())?;
    Ok(())
}

pub fn read_params(r: &mut impl Read) -> Result<MlpParams, IoError> {
    read_magic(r, CHECKPOINT_MAGIC)?;
    let n_layers = read_u32(r)? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        let weight = Tensor::matrix(rows, cols, read_f64s(r, rows * cols)?).map_err(SirenError::from)?;
        let bias = Tensor::vector(read_f64s(r, cols)?);
        layers.push(Layer { weight, bias });
    }
    let omega0 = read_f64(r)?;
    expect_eof(r)?;
    let params = MlpParams { layers, omega0 };
    params.validate()?;
    Ok(params)
}

pub fn save_params(path: &Path, params: &MlpParams) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params(&mut w, params)?;
    Ok(w.flush()?)
}

pub fn load_params(path: &Path) -> Result<MlpParams, IoError> {
    read_params(&mut BufReader::new(File::open(path)?))
}

/// Sensor CSV with columns `i, j, x, y`.
pub fn write_sensors(w: impl Write, sensors: &SensorSet, grid: &GridSpec) -> Result<(), IoError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["i", "j", "x", "y"])?;
    for (&(i, j), (x, y)) in sensors.indices.iter().zip(sensors.positions(grid)) {
        csv.write_record([i.to_string(), j.to_string(), format!("{x:?}"), format!("{y:?}")])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_sensors(r: impl Read) -> Result<SensorSet, IoError> {
    let mut csv = csv::Reader::from_reader(r);
    let mut indices = Vec::new();
    for rec in csv.records() {
        let rec = rec?;
        let field = |k: usize| -> Result<&str, IoError> {
            rec.get(k).ok_or_else(|| IoError::Format(format!("sensor row missing column {k}")))
        };
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| IoError::Format(format!("sensor index {s:?}: {e}")));
        indices.push((parse(field(0)?)?, parse(field(1)?)?));
    }
    Ok(SensorSet::new(indices))
}

/// Measurement CSV with columns `sensor_id, t_index, value`, sensor-major.
pub fn write_measurements(w: impl Write, meas: &Measurements) -> Result<(), IoError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["sensor_id", "t_index", "value"])?;
    for sensor in 0..meas.sensors() {
        for (t_index, &value) in meas.series(sensor).iter().enumerate() {
            csv.write_record([sensor.to_string(), t_index.to_string(), format!("{value:?}")])?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn read_measurements(r: impl Read) -> Result<Measurements, IoError> {
    let mut csv = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in csv.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(IoError::Format(format!("measurement row has {} columns", rec.len())));
        }
        let bad = |e: String| IoError::Format(e);
        let sensor: usize = rec[0].trim().parse().map_err(|e| bad(format!("sensor_id: {e}")))?;
        let t_index: usize = rec[1].trim().parse().map_err(|e| bad(format!("t_index: {e}")))?;
        let value: f64 = rec[2].trim().parse().map_err(|e| bad(format!("value: {e}")))?;
        rows.push((sensor, t_index, value));
    }
    let sensors = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let samples = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != sensors * samples {
        return Err(IoError::Format(format!(
            "{} rows do not fill {sensors} sensors x {samples} samples",
            rows.len()
        )));
    }
    let mut values = vec![f64::NAN; sensors * samples];
    for (sensor, t_index, value) in rows {
        values[sensor * samples + t_index] = value;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(IoError::Format("duplicate measurement rows".into()));
    }
    Ok(Measurements::new(sensors, samples, values)?)
}

/// Maps `[-scale, scale]` onto `0..=255`; zero lands on mid-grey.
pub fn gray_level(value: f64, scale: f64) -> u8 {
    if scale <= 0.0 || !scale.is_finite() {
        return 128;
    }
    let u = ((value / scale).clamp(-1.0, 1.0) + 1.0) * 127.5;
    u.round() as u8
}

/// Binary PGM of one `m x m` frame, row index `i` running down the image.
pub fn write_pgm(w: &mut impl Write, frame: &[f64], m: usize, scale: f64) -> Result<(), IoError> {
    if frame.len() != m * m {
        return Err(IoError::Format(format!("frame of {} values is not {m}x{m}", frame.len())));
    }
    write!(w, "P5\n{m} {m}\n255\n")?;
    let bytes: Vec<u8> = frame.iter().map(|&v| gray_level(v, scale)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Writes the chosen frames as `{prefix}_{frame:04}.pgm` with one symmetric
/// scale shared by the whole series. Returns the written paths.
pub fn write_pgm_series(
    dir: &Path,
    prefix: &str,
    field: &FieldSequence,
    frames: &[usize],
) -> Result<Vec<std::path::PathBuf>, IoError> {
    std::fs::create_dir_all(dir)?;
    let scale = field.max_abs();
    let mut paths = Vec::with_capacity(frames.len());
    for &n in frames {
        if n >= field.n_frames() {
            return Err(IoError::Format(format!("frame {n} out of {}", field.n_frames())));
        }
        let path = dir.join(format!("{prefix}_{n:04}.pgm"));
        let mut w = BufWriter::new(File::create(&path)?);
        write_pgm(&mut w, field.frame(n), field.spec.m, scale)?;
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siren::Arch;

    fn field() -> FieldSequence {
        let spec = GridSpec::unit_square(4);
        let data = (0..48).map(|k| (k as f64 * 0.37).sin()).collect();
        FieldSequence::new(spec, 0.01, 3, data).unwrap()
    }

    #[test]
    fn field_header_layout() {
        let mut buf = Vec::new();
        write_field(&mut buf, &field()).unwrap();
        assert_eq!(&buf[..4], b"WFD1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(buf[12..20].try_into().unwrap()), 1.0 / 3.0);
        assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), 0.01);
        assert_eq!(buf.len(), 28 + 48 * 8);
        assert_eq!(f64::from_le_bytes(buf[28 + 8 * 5..28 + 8 * 6].try_into().unwrap()), field().frame(0)[5]);
    }

    #[test]
    fn field_round_trip_is_exact() {
        let f = field();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let back = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(back.data(), f.data());
        assert_eq!(back.spec, f.spec);
        assert_eq!(back.dt, f.dt);
    }

    #[test]
    fn field_rejects_bad_magic_and_truncation() {
        let mut buf = Vec::new();
        write_field(&mut buf, &field()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_field(&mut bad.as_slice()), Err(IoError::Magic { .. })));
        assert!(read_field(&mut &buf[..buf.len() - 3]).is_err());
        buf.push(0);
        assert!(matches!(read_field(&mut buf.as_slice()), Err(IoError::Format(_))));
    }

    #[test]
    fn params_round_trip_is_exact() {
        let arch = Arch {
            inputs: 2,
            hidden: vec![5, 4],
            outputs: 1,
        };
        let p = MlpParams::init(&arch, 30.0, 9).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        assert_eq!(&buf[..4], b"MLP1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 3);
        let expected = 8 + 3 * 8 + 8 * p.num_params() + 8;
        assert_eq!(buf.len(), expected);
        let back = read_params(&mut buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn sensors_and_measurements_round_trip() {
        let grid = GridSpec::unit_square(11);
        let sensors = SensorSet::new(vec![(1, 2), (7, 3)]);
        let mut buf = Vec::new();
        write_sensors(&mut buf, &sensors, &grid).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,x,y\n1,2,0.1,0.2\n"));
        assert_eq!(read_sensors(buf.as_slice()).unwrap(), sensors);

        let meas = Measurements::new(2, 3, vec![0.1, -0.2, 1e-17, 4.0, 5.5, -6.25]).unwrap();
        let mut buf = Vec::new();
        write_measurements(&mut buf, &meas).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sensor_id,t_index,value\n0,0,0.1\n0,1,-0.2\n"));
        assert_eq!(read_measurements(buf.as_slice()).unwrap().values(), meas.values());
    }

    #[test]
    fn incomplete_measurements_are_rejected() {
        let text = "sensor_id,t_index,value\n0,0,1.0\n1,1,2.0\n";
        assert!(read_measurements(text.as_bytes()).is_err());
    }

    #[test]
    fn gray_levels_are_symmetric() {
        assert_eq!(gray_level(0.0, 2.0), 128);
        assert_eq!(gray_level(2.0, 2.0), 255);
        assert_eq!(gray_level(-2.0, 2.0), 0);
        assert_eq!(gray_level(-5.0, 2.0), 0);
        assert_eq!(gray_level(1.0, 0.0), 128);
    }

    #[test]
    fn pgm_series_shares_one_scale() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::unit_square(3);
        let mut data = vec![0.0; 18];
        data[4] = 1.0;
        data[13] = 4.0;
        let f = FieldSequence::new(spec, 0.1, 2, data).unwrap();
        let paths = write_pgm_series(dir.path(), "p", &f, &[0, 1]).unwrap();
        let first = std::fs::read(&paths[0]).unwrap();
        let header = b"P5\n3 3\n255\n";
        assert_eq!(&first[..header.len()], header);
        assert_eq!(first[header.len() + 4], gray_level(1.0, 4.0));
        let second = std::fs::read(&paths[1]).unwrap();
        assert_eq!(second[header.len() + 4], 255);
        assert!(write_pgm_series(dir.path(), "p", &f, &[2]).is_err());
    }
}
