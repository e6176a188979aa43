//! JSON and CSV writers with every float at 17 significant digits, and the
//! run manifest.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use gaudin::C64;
use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};

/// Compact JSON, but floats always in `{:.16e}` form.
struct FixedDigits;

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        CompactFormatter.write_f32(writer, value)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits);
    value.serialize(&mut ser).map_err(io::Error::other)?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    std::fs::write(path, to_json(value)?)
}

/// `t,value` rows.
pub fn write_series(path: &Path, times: &[f64], values: &[f64]) -> io::Result<()> {
    let mut out = String::from("t,value\n");
    for (t, v) in times.iter().zip(values) {
        out.push_str(&format!("{t:.16e},{v:.16e}\n"));
    }
    std::fs::write(path, out)
}

/// `[re, im]`
pub fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config: String,
    pub options: serde_json::Value,
    pub version: &'static str,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub status: &'a str,
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub details: serde_json::Map<String, serde_json::Value>,
}
