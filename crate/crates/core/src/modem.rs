//! Constellations, detection-region classes, Gray bit maps and
//! rotation-aware region detection.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer than this are treated as the same point.
const POINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Psk,
    Qam,
    Apsk,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::Psk => "psk",
            Scheme::Qam => "qam",
            Scheme::Apsk => "apsk",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn of(v: f64) -> Sign {
        if v < 0.0 {
            Sign::Neg
        } else {
            Sign::Pos
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
        }
    }
}

/// Detection-region class of a constellation point.
///
/// The class decides which received-signal coordinates are pinned to the
/// nominal point and which are allowed to move deeper into the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymbolClass {
    /// Both coordinates pinned.
    Inner,
    /// Real coordinate on the outer boundary and free in the given direction.
    EdgeRealFree(Sign),
    /// Imaginary coordinate on the outer boundary and free in the given direction.
    EdgeImagFree(Sign),
    /// Both coordinates free in their sign directions.
    Corner(Sign, Sign),
    /// Outer ring of a circular constellation: free along the symbol's ray.
    CircularOutermost,
}

#[derive(Debug, Clone, PartialEq)]
enum Geometry {
    /// Points at `offset + 2πk/M`.
    Circle { offset: f64 },
    /// Rectangular grid with `nx` real levels and `ny` imaginary levels, odd
    /// integers divided by `unit`.
    Grid { nx: usize, ny: usize, unit: f64 },
    /// Concentric rings, innermost first.
    Rings { rings: Vec<Ring> },
}

#[derive(Debug, Clone, PartialEq)]
struct Ring {
    radius: f64,
    count: usize,
    offset: f64,
    /// Index of the ring's first point in `points`.
    start: usize,
}

/// A normalized symbol alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    scheme: Scheme,
    order: usize,
    bits_per_symbol: usize,
    points: Vec<Complex64>,
    classes: Vec<SymbolClass>,
    /// Bit label of each point.
    labels: Vec<u32>,
    /// Point index for each label.
    by_label: Vec<usize>,
    geometry: Geometry,
}

fn gray(i: usize) -> u32 {
    (i ^ (i >> 1)) as u32
}

fn unsupported(scheme: Scheme, order: usize) -> Error {
    Error::UnsupportedConstellation {
        scheme: scheme.to_string(),
        order,
    }
}

/// Build the constellation for `(scheme, order)`.
///
/// PSK points sit at `e^{iπ(2k+1)/M}` (BPSK at `±1`), QAM uses a
/// `2^⌈m/2⌉ × 2^⌊m/2⌋` grid and 16-APSK is the 4+12 ring layout.
pub fn build_constellation(scheme: Scheme, order: usize) -> Result<Constellation> {
    if order < 2 || !order.is_power_of_two() {
        return Err(unsupported(scheme, order));
    }
    let m = order.trailing_zeros() as usize;
    match scheme {
        Scheme::Psk => Ok(build_psk(order, m)),
        Scheme::Qam => build_qam(order, m),
        Scheme::Apsk => build_apsk(order, m),
    }
}

fn build_psk(order: usize, m: usize) -> Constellation {
    let offset = if order == 2 { 0.0 } else { PI / order as f64 };
    let points = ring_points(1.0, order, offset);
    let labels: Vec<u32> = (0..order).map(gray).collect();
    Constellation::assemble(
        Scheme::Psk,
        order,
        m,
        points,
        vec![SymbolClass::CircularOutermost; order],
        labels,
        Geometry::Circle { offset },
    )
}

fn build_qam(order: usize, m: usize) -> Result<Constellation> {
    if order < 4 {
        return Err(unsupported(Scheme::Qam, order));
    }
    let bx = m.div_ceil(2);
    let by = m / 2;
    let (nx, ny) = (1usize << bx, 1usize << by);
    let energy = ((nx * nx - 1) + (ny * ny - 1)) as f64 / 3.0;
    let unit = energy.sqrt();
    let level = |i: usize, n: usize| (2 * i) as f64 - (n as f64 - 1.0);

    let mut points = Vec::with_capacity(order);
    let mut classes = Vec::with_capacity(order);
    let mut labels = Vec::with_capacity(order);
    for ix in 0..nx {
        for iy in 0..ny {
            let (re, im) = (level(ix, nx), level(iy, ny));
            points.push(Complex64::new(re / unit, im / unit));
            let re_out = ix == 0 || ix == nx - 1;
            let im_out = iy == 0 || iy == ny - 1;
            classes.push(match (re_out, im_out) {
                (true, true) => SymbolClass::Corner(Sign::of(re), Sign::of(im)),
                (true, false) => SymbolClass::EdgeRealFree(Sign::of(re)),
                (false, true) => SymbolClass::EdgeImagFree(Sign::of(im)),
                (false, false) => SymbolClass::Inner,
            });
            labels.push((gray(ix) << by) | gray(iy));
        }
    }
    Ok(Constellation::assemble(
        Scheme::Qam,
        order,
        m,
        points,
        classes,
        labels,
        Geometry::Grid { nx, ny, unit },
    ))
}

/// Outer-to-inner radius ratio of the 4+12 ring layout.
const APSK16_RING_RATIO: f64 = 2.57;

fn build_apsk(order: usize, m: usize) -> Result<Constellation> {
    if order != 16 {
        return Err(unsupported(Scheme::Apsk, order));
    }
    let r1 = (16.0 / (4.0 + 12.0 * APSK16_RING_RATIO * APSK16_RING_RATIO)).sqrt();
    let rings = vec![
        Ring {
            radius: r1,
            count: 4,
            offset: PI / 4.0,
            start: 0,
        },
        Ring {
            radius: r1 * APSK16_RING_RATIO,
            count: 12,
            offset: PI / 12.0,
            start: 4,
        },
    ];
    let mut points = Vec::with_capacity(order);
    let mut classes = Vec::with_capacity(order);
    for (ri, ring) in rings.iter().enumerate() {
        points.extend(ring_points(ring.radius, ring.count, ring.offset));
        for _ in 0..ring.count {
            classes.push(if ri + 1 == rings.len() {
                SymbolClass::CircularOutermost
            } else {
                SymbolClass::Inner
            });
        }
    }
    // Ring sizes are not powers of two, so labels follow point order.
    let labels = (0..order as u32).collect();
    Ok(Constellation::assemble(
        Scheme::Apsk,
        order,
        m,
        points,
        classes,
        labels,
        Geometry::Rings { rings },
    ))
}

/// Round away floating-point dust so axis points have exact zero coordinates.
/// `count` points `radius·e^{i(offset + 2πk/count)}`. When `count` is a
/// multiple of 4 the first quarter is computed and the rest generated by
/// exact quarter turns, so the set is closed under `z ↦ i·z` bit for bit.
fn ring_points(radius: f64, count: usize, offset: f64) -> Vec<Complex64> {
    let at = |k: usize| snap(Complex64::from_polar(radius, offset + 2.0 * PI * k as f64 / count as f64));
    if !count.is_multiple_of(4) {
        return (0..count).map(at).collect();
    }
    let quarter: Vec<Complex64> = (0..count / 4).map(at).collect();
    let mut points = Vec::with_capacity(count);
    for turn in 0..4 {
        for &z in &quarter {
            points.push(match turn {
                0 => z,
                1 => Complex64::new(-z.im, z.re),
                2 => -z,
                _ => Complex64::new(z.im, -z.re),
            });
        }
    }
    points
}

fn snap(z: Complex64) -> Complex64 {
    let clean = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
    Complex64::new(clean(z.re), clean(z.im))
}

impl Constellation {
    fn assemble(
        scheme: Scheme,
        order: usize,
        bits_per_symbol: usize,
        points: Vec<Complex64>,
        classes: Vec<SymbolClass>,
        labels: Vec<u32>,
        geometry: Geometry,
    ) -> Self {
        let mut by_label = vec![usize::MAX; order];
        for (idx, &label) in labels.iter().enumerate() {
            by_label[label as usize] = idx;
        }
        Constellation {
            scheme,
            order,
            bits_per_symbol,
            points,
            classes,
            labels,
            by_label,
            geometry,
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    pub fn classes(&self) -> &[SymbolClass] {
        &self.classes
    }

    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    pub fn classify_symbol(&self, index: usize) -> SymbolClass {
        self.classes[index]
    }

    /// Short name such as `qpsk`, `8psk` or `16qam`.
    pub fn name(&self) -> String {
        match (self.scheme, self.order) {
            (Scheme::Psk, 2) => "bpsk".into(),
            (Scheme::Psk, 4) => "qpsk".into(),
            (s, m) => format!("{m}{s}"),
        }
    }

    /// Index of the point equal to `z`, if any.
    pub fn index_of(&self, z: Complex64) -> Option<usize> {
        self.points.iter().position(|p| (p - z).norm() < POINT_TOL)
    }

    /// Largest `r ≤ order` such that the point set is invariant under a
    /// rotation by `2π/r`.
    pub fn rotational_order(&self) -> usize {
        (1..=self.order)
            .rev()
            .find(|&r| {
                let w = Complex64::from_polar(1.0, TAU / r as f64);
                self.points.iter().all(|&p| self.index_of(p * w).is_some())
            })
            .unwrap_or(1)
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.order as f64
    }

    /// Gray-coded point index for `bits` (most significant bit first).
    pub fn bits_to_symbol(&self, bits: &[u8]) -> Result<usize> {
        if bits.len() != self.bits_per_symbol {
            return Err(Error::BitWidth {
                expected: self.bits_per_symbol,
                got: bits.len(),
            });
        }
        let mut label = 0usize;
        for &b in bits {
            if b > 1 {
                return Err(Error::InvalidArgument(format!("bit value {b}")));
            }
            label = (label << 1) | b as usize;
        }
        Ok(self.by_label[label])
    }

    pub fn symbol_to_bits(&self, index: usize) -> Vec<u8> {
        let label = self.labels[index];
        (0..self.bits_per_symbol)
            .rev()
            .map(|b| ((label >> b) & 1) as u8)
            .collect()
    }

    /// Decide which point's detection region contains `received`.
    ///
    /// The sample is first derotated by `e^{-i·rotation}`. `amplitude` is the
    /// receiver's reference scale (`σ_z·√γ`), needed only to place the inner
    /// decision boundaries of multi-level constellations; regions of outer
    /// points extend to infinity.
    pub fn detect(&self, received: Complex64, rotation: f64, amplitude: f64) -> usize {
        let r = received * Complex64::from_polar(1.0, -rotation);
        match &self.geometry {
            Geometry::Circle { offset } => sector(r.arg(), *offset, self.order),
            Geometry::Grid { nx, ny, unit } => {
                let pick = |v: f64, n: usize| -> usize {
                    let pos = ((v * unit / amplitude) + (n as f64 - 1.0)) / 2.0;
                    pos.round().clamp(0.0, (n - 1) as f64) as usize
                };
                let ix = pick(r.re, *nx);
                let iy = pick(r.im, *ny);
                ix * ny + iy
            }
            Geometry::Rings { rings } => {
                let mag = r.norm() / amplitude;
                let mut chosen = rings.len() - 1;
                for (i, pair) in rings.windows(2).enumerate() {
                    if mag < 0.5 * (pair[0].radius + pair[1].radius) {
                        chosen = i;
                        break;
                    }
                }
                let ring = &rings[chosen];
                ring.start + sector(r.arg(), ring.offset, ring.count)
            }
        }
    }

    /// Serializable dump used for fixtures.
    pub fn to_dump(&self) -> ConstellationDump {
        ConstellationDump {
            scheme: self.scheme,
            order: self.order,
            points: self.points.iter().map(|p| [p.re, p.im]).collect(),
            classes: self.classes.clone(),
            labels: self
                .labels
                .iter()
                .map(|&l| format!("{:0width$b}", l, width = self.bits_per_symbol))
                .collect(),
        }
    }
}

/// Index of the circular sector (centred on `offset + 2πk/count`) holding `angle`.
fn sector(angle: f64, offset: f64, count: usize) -> usize {
    let step = 2.0 * PI / count as f64;
    let k = ((angle - offset) / step).round();
    k.rem_euclid(count as f64) as usize % count
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstellationDump {
    pub scheme: Scheme,
    pub order: usize,
    pub points: Vec<[f64; 2]>,
    pub classes: Vec<SymbolClass>,
    pub labels: Vec<String>,
}

/// Parse names like `bpsk`, `qpsk`, `8psk`, `16qam`, `16apsk`.
impl FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase().replace('-', "");
        match lower.as_str() {
            "bpsk" => return build_constellation(Scheme::Psk, 2),
            "qpsk" => return build_constellation(Scheme::Psk, 4),
            _ => {}
        }
        let split = lower
            .find(|c: char| !c.is_ascii_digit())
            .ok_or_else(|| Error::InvalidArgument(format!("modulation '{s}'")))?;
        let (digits, scheme) = lower.split_at(split);
        let order: usize = digits
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("modulation '{s}'")))?;
        let scheme = match scheme {
            "psk" => Scheme::Psk,
            "qam" => Scheme::Qam,
            "apsk" => Scheme::Apsk,
            _ => return Err(Error::InvalidArgument(format!("modulation '{s}'"))),
        };
        build_constellation(scheme, order)
    }
}
