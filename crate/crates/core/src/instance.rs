//! Problem instances: parameters, seeded generation, planting helpers and the
//! `OVCP 1` text format.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitvec::BitVector;
use crate::error::{Error, Result};

pub const FORMAT_MAGIC: &str = "OVCP 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Ov,
    Cp,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Ov => "ov",
            ProblemKind::Cp => "cp",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ov" => Ok(ProblemKind::Ov),
            "cp" => Ok(ProblemKind::Cp),
            other => Err(Error::param(format!("unknown kind `{other}` (expected ov|cp)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub kind: ProblemKind,
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub seed: u64,
}

impl InstanceParams {
    pub fn ov(n: usize, d: usize, p: f64, seed: u64) -> Self {
        InstanceParams {
            kind: ProblemKind::Ov,
            n,
            d,
            p,
            seed,
        }
    }

    pub fn cp(n: usize, d: usize, seed: u64) -> Self {
        InstanceParams {
            kind: ProblemKind::Cp,
            n,
            d,
            p: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n must be at least 1"));
        }
        if self.d == 0 {
            return Err(Error::param("d must be at least 1"));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::param(format!("p = {} is outside (0, 1)", self.p)));
        }
        if self.kind == ProblemKind::Cp && self.p != 0.5 {
            return Err(Error::param(format!(
                "closest-pair instances fix p = 0.5, got {}",
                self.p
            )));
        }
        if self.n as u64 >= 1 << STREAM_INDEX_BITS {
            return Err(Error::param("n too large for the generator stream layout"));
        }
        Ok(())
    }

    /// The dimension ratio `c = d / log₂ n`; infinite for `n = 1`.
    pub fn c(&self) -> f64 {
        dimension_ratio(self.n, self.d)
    }

    /// `p` as an exact rational taken from its shortest round-trip decimal form.
    pub fn p_ratio(&self) -> (BigUint, BigUint) {
        decimal_ratio(&format!("{}", self.p)).expect("f64 Display is always a plain decimal")
    }
}

pub fn dimension_ratio(n: usize, d: usize) -> f64 {
    d as f64 / (n as f64).log2()
}

/// Parses a plain decimal (`0.25`, `3`, `.5`) into `numerator / 10^k`.
pub fn decimal_ratio(s: &str) -> Option<(BigUint, BigUint)> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num = if digits.is_empty() {
        BigUint::zero()
    } else {
        digits.parse::<BigUint>().ok()?
    };
    let den = BigUint::from(10u32).pow(frac.len() as u32);
    Some((num, den))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub params: InstanceParams,
    pub xs: Vec<BitVector>,
    pub ys: Vec<BitVector>,
}

impl Instance {
    /// Wraps explicit vectors, checking the shape against `params`.
    pub fn new(params: InstanceParams, xs: Vec<BitVector>, ys: Vec<BitVector>) -> Result<Self> {
        params.validate()?;
        if xs.len() != params.n || ys.len() != params.n {
            return Err(Error::param(format!(
                "expected {} vectors per side, got {} and {}",
                params.n,
                xs.len(),
                ys.len()
            )));
        }
        if let Some(v) = xs.iter().chain(&ys).find(|v| v.len() != params.d) {
            return Err(Error::param(format!(
                "vector of length {} in an instance with d = {}",
                v.len(),
                params.d
            )));
        }
        Ok(Instance { params, xs, ys })
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn d(&self) -> usize {
        self.params.d
    }

    pub fn kind(&self) -> ProblemKind {
        self.params.kind
    }

    pub(crate) fn expect_kind(&self, kind: ProblemKind) -> Result<()> {
        if self.params.kind != kind {
            return Err(Error::KindMismatch {
                expected: kind,
                found: self.params.kind,
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Generator stream tags. Each (tag, index) pair selects an independent ChaCha
/// stream under the instance seed.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub(crate) enum Stream {
    SideX = 0,
    SideY = 1,
    Subsample = 2,
    EventSample = 3,
}

const STREAM_INDEX_BITS: u32 = 56;

pub(crate) fn stream_rng(seed: u64, tag: Stream, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << STREAM_INDEX_BITS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << STREAM_INDEX_BITS) | index);
    rng
}

/// `floor(p · 2^64)`; a uniform `u64` below it is a Bernoulli(p) draw.
fn bernoulli_threshold(p: f64) -> u64 {
    // Scaling by a power of two is exact in binary floating point.
    (p * 18_446_744_073_709_551_616.0) as u64
}

fn sample_vector(seed: u64, tag: Stream, index: usize, d: usize, threshold: u64) -> BitVector {
    let mut rng = stream_rng(seed, tag, index as u64);
    let mut v = BitVector::zeros(d);
    for k in 0..d {
        if rng.next_u64() < threshold {
            v.set(k, true);
        }
    }
    v
}

/// Draws every coordinate as an independent Bernoulli(p) bit. The bit for
/// (side, index, coordinate) is the coordinate-th draw of the (seed, side,
/// index) stream, so output never depends on generation order.
pub fn generate_instance(params: InstanceParams) -> Result<Instance> {
    use rayon::prelude::*;

    params.validate()?;
    let threshold = bernoulli_threshold(params.p);
    let side = |tag| {
        (0..params.n)
            .into_par_iter()
            .map(|i| sample_vector(params.seed, tag, i, params.d, threshold))
            .collect::<Vec<_>>()
    };
    let xs = side(Stream::SideX);
    let ys = side(Stream::SideY);
    Ok(Instance { params, xs, ys })
}

/// Overwrites `X[i]` and `Y[j]` so that `⟨X[i], Y[j]⟩ = target`.
///
/// The first `target` coordinates are set in both vectors; on the remaining
/// coordinates the original bits are kept except that shared ones are removed
/// from `Y[j]`.
pub fn plant_pair(inst: &Instance, target: usize, (i, j): (usize, usize)) -> Result<Instance> {
    let d = inst.d();
    if target > d {
        return Err(Error::param(format!("target inner product {target} exceeds d = {d}")));
    }
    check_positions(inst, i, j)?;
    let mut out = inst.clone();
    let (x, y) = (&mut out.xs[i], &mut out.ys[j]);
    for k in 0..d {
        if k < target {
            x.set(k, true);
            y.set(k, true);
        } else if x.get(k) && y.get(k) {
            y.set(k, false);
        }
    }
    debug_assert_eq!(out.xs[i].dot(&out.ys[j]) as usize, target);
    Ok(out)
}

/// Overwrites `X[i]` with a copy of `Y[j]` whose first `distance` bits are
/// flipped, so `Hamming(X[i], Y[j]) = distance`.
pub fn plant_distance(inst: &Instance, distance: usize, (i, j): (usize, usize)) -> Result<Instance> {
    let d = inst.d();
    if distance > d {
        return Err(Error::param(format!("target distance {distance} exceeds d = {d}")));
    }
    check_positions(inst, i, j)?;
    let mut out = inst.clone();
    let mut x = out.ys[j].clone();
    for k in 0..distance {
        x.set(k, !x.get(k));
    }
    out.xs[i] = x;
    Ok(out)
}

fn check_positions(inst: &Instance, i: usize, j: usize) -> Result<()> {
    if i >= inst.n() || j >= inst.n() {
        return Err(Error::param(format!(
            "position ({i}, {j}) out of range for n = {}",
            inst.n()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

pub fn write_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_instance_to(inst, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_instance_to(inst: &Instance, out: &mut impl Write) -> Result<()> {
    let p = &inst.params;
    writeln!(out, "{FORMAT_MAGIC}")?;
    writeln!(
        out,
        "kind={} n={} d={} p={} seed={}",
        p.kind, p.n, p.d, p.p, p.seed
    )?;
    for v in inst.xs.iter().chain(&inst.ys) {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let text = fs::read_to_string(path)?;
    parse_instance(&text)
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));

    match lines.next() {
        Some((_, l)) if l == FORMAT_MAGIC => {}
        Some((no, l)) => return Err(Error::format(no, format!("expected `{FORMAT_MAGIC}`, found `{l}`"))),
        None => return Err(Error::format(1, "empty file")),
    }
    let (header_no, header) = lines
        .next()
        .ok_or_else(|| Error::format(2, "missing parameter header"))?;
    let params = parse_header(header).map_err(|msg| Error::format(header_no, msg))?;
    params
        .validate()
        .map_err(|e| Error::format(header_no, e))?;

    let mut rows = Vec::with_capacity(2 * params.n);
    let mut last_line = header_no;
    for (no, line) in lines {
        last_line = no;
        if rows.len() == 2 * params.n {
            if line.is_empty() {
                continue;
            }
            return Err(Error::format(
                no,
                format!("unexpected extra row; header declares n = {} per side", params.n),
            ));
        }
        if line.len() != params.d {
            return Err(Error::format(
                no,
                format!("row has length {}, expected d = {}", line.len(), params.d),
            ));
        }
        let v = BitVector::parse(line)
            .map_err(|col| Error::format(no, format!("non-binary character at column {}", col + 1)))?;
        rows.push(v);
    }
    if rows.len() != 2 * params.n {
        return Err(Error::format(
            last_line + 1,
            format!(
                "expected {} rows ({} per side), found {}",
                2 * params.n,
                params.n,
                rows.len()
            ),
        ));
    }
    let ys = rows.split_off(params.n);
    Ok(Instance {
        params,
        xs: rows,
        ys,
    })
}

fn parse_header(line: &str) -> std::result::Result<InstanceParams, String> {
    let mut kind = None;
    let mut n = None;
    let mut d = None;
    let mut p = None;
    let mut seed = None;
    for tok in line.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| format!("malformed header token `{tok}`"))?;
        let bad = |what: &str| format!("malformed {what} `{value}`");
        match key {
            "kind" => kind = Some(value.parse::<ProblemKind>().map_err(|_| bad("kind"))?),
            "n" => n = Some(value.parse::<usize>().map_err(|_| bad("n"))?),
            "d" => d = Some(value.parse::<usize>().map_err(|_| bad("d"))?),
            "p" => {
                if decimal_ratio(value).is_none() {
                    return Err(bad("p"));
                }
                p = Some(value.parse::<f64>().map_err(|_| bad("p"))?)
            }
            "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad("seed"))?),
            other => return Err(format!("unknown header key `{other}`")),
        }
    }
    let missing = |k: &str| format!("header is missing `{k}`");
    Ok(InstanceParams {
        kind: kind.ok_or_else(|| missing("kind"))?,
        n: n.ok_or_else(|| missing("n"))?,
        d: d.ok_or_else(|| missing("d"))?,
        p: p.ok_or_else(|| missing("p"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
    })
}

impl fmt::Display for InstanceParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "kind={} n={} d={} p={} seed={}",
            self.kind, self.n, self.d, self.p, self.seed
        )
    }
}
