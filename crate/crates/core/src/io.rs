//! CSV profiles and field snapshots. The first line is a comment header
//! `# N=<dim> r_max=<r> M=<cells> model=<sha256>`; floats are written in
//! shortest round-trip form.

use std::io::{BufRead, BufReader, Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::ComplexFieldState;
use crate::error::{Error, Result};
use crate::nonlinearity::NonlinearityModel;
use crate::radial::RadialGrid;

/// sha256 of the model's canonical JSON.
pub fn model_hash(model: &NonlinearityModel) -> String {
    let json = serde_json::to_string(model).expect("model serializes");
    sha256_hex(json.as_bytes())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileHeader {
    pub dimension: u32,
    pub r_max: f64,
    pub cells: usize,
    pub model_hash: String,
}

impl ProfileHeader {
    pub fn for_grid(grid: &RadialGrid, model_hash: &str) -> Self {
        Self { dimension: grid.dimension(), r_max: grid.r_max(), cells: grid.cells(), model_hash: model_hash.into() }
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.dimension, self.r_max, self.cells)
    }

    pub fn matches(&self, grid: &RadialGrid) -> bool {
        self.dimension == grid.dimension() && self.r_max == grid.r_max() && self.cells == grid.cells()
    }

    fn line(&self) -> String {
        format!("# N={} r_max={} M={} model={}", self.dimension, self.r_max, self.cells, self.model_hash)
    }

    fn parse(line: &str) -> Result<Self> {
        let body = line.strip_prefix('#').ok_or_else(|| Error::Parse("missing '#' header line".into()))?;
        let (mut n, mut r, mut m, mut h) = (None, None, None, None);
        for item in body.split_whitespace() {
            let (k, v) = item.split_once('=').ok_or_else(|| Error::Parse(format!("bad header item {item:?}")))?;
            let bad = |e: &dyn std::fmt::Display| Error::Parse(format!("header {k}: {e}"));
            match k {
                "N" => n = Some(v.parse::<u32>().map_err(|e| bad(&e))?),
                "r_max" => r = Some(v.parse::<f64>().map_err(|e| bad(&e))?),
                "M" => m = Some(v.parse::<usize>().map_err(|e| bad(&e))?),
                "model" => h = Some(v.to_string()),
                _ => {}
            }
        }
        match (n, r, m, h) {
            (Some(dimension), Some(r_max), Some(cells), Some(model_hash)) => {
                Ok(Self { dimension, r_max, cells, model_hash })
            }
            _ => Err(Error::Parse("header needs N, r_max, M and model".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileData {
    pub header: ProfileHeader,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub state: Option<ComplexFieldState>,
}

pub fn write_profile<W: Write>(out: W, grid: &RadialGrid, u: &[f64], model_hash: &str) -> Result<()> {
    if u.len() != grid.len() {
        return Err(Error::Field("profile does not match the grid".into()));
    }
    let mut out = out;
    writeln!(out, "{}", ProfileHeader::for_grid(grid, model_hash).line())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "u"]).map_err(csv_err)?;
    for (j, x) in u.iter().enumerate() {
        w.write_record([grid.node(j).to_string(), x.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Snapshot of (ψ, ψ_t); the `u` column holds |ψ|. The time is not stored.
pub fn write_state<W: Write>(out: W, grid: &RadialGrid, state: &ComplexFieldState, model_hash: &str) -> Result<()> {
    state.check(grid)?;
    let mut out = out;
    writeln!(out, "{}", ProfileHeader::for_grid(grid, model_hash).line())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "u", "re_psi", "im_psi", "re_psi_t", "im_psi_t"]).map_err(csv_err)?;
    for (j, (p, v)) in state.psi.iter().zip(&state.psi_t).enumerate() {
        w.write_record([
            grid.node(j).to_string(),
            p.norm().to_string(),
            p.re.to_string(),
            p.im.to_string(),
            v.re.to_string(),
            v.im.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profile<R: Read>(input: R) -> Result<ProfileData> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let header = ProfileHeader::parse(first.trim())?;
    let mut rd = csv::Reader::from_reader(input);
    let cols: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(|s| s.trim().to_string()).collect();
    let find = |name: &str| cols.iter().position(|c| c == name);
    let (ir, iu) = match (find("r"), find("u")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Parse("profile needs columns r and u".into())),
    };
    let complex = match (find("re_psi"), find("im_psi"), find("re_psi_t"), find("im_psi_t")) {
        (Some(a), Some(b), Some(c), Some(d)) => Some([a, b, c, d]),
        _ => None,
    };
    let (mut r, mut u, mut psi, mut psi_t) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).ok_or_else(|| Error::Parse(format!("row {}: missing column", line + 1)))?;
            s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))
        };
        r.push(num(ir)?);
        u.push(num(iu)?);
        if let Some([a, b, c, d]) = complex {
            psi.push(Complex64::new(num(a)?, num(b)?));
            psi_t.push(Complex64::new(num(c)?, num(d)?));
        }
    }
    if u.len() != header.cells + 1 {
        return Err(Error::Parse(format!("expected {} rows, found {}", header.cells + 1, u.len())));
    }
    let state = complex.map(|_| ComplexFieldState { psi, psi_t, time: 0.0 });
    Ok(ProfileData { header, r, u, state })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
