//! Circuit geometries: ordered sequences of mode pairings.
//!
//! Modes are 0-based inside the crate and 1-based in every external format.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One block of a pairing, 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Single(usize),
    /// `(a, b)` with `a < b`.
    Pair(usize, usize),
}

/// A partition of the modes into singletons and pairs, stored as the induced involution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct Pairing {
    partner: Vec<usize>,
}

impl Pairing {
    /// Builds a pairing on `n` modes from 1-based blocks of size 1 or 2.
    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPairing("no modes".into()));
        }
        let mut partner = vec![usize::MAX; n];
        for block in blocks {
            let idx: Vec<usize> = block
                .iter()
                .map(|&m| {
                    if m == 0 || m > n {
                        Err(Error::InvalidPairing(format!(
                            "mode {m} out of range 1..={n}"
                        )))
                    } else {
                        Ok(m - 1)
                    }
                })
                .collect::<Result<_>>()?;
            let (a, b) = match idx.as_slice() {
                [a] => (*a, *a),
                [a, b] if a != b => (*a, *b),
                [a, _] => {
                    return Err(Error::InvalidPairing(format!(
                        "block {{{0},{0}}} repeats a mode",
                        a + 1
                    )))
                }
                _ => {
                    return Err(Error::InvalidPairing(format!(
                        "block {block:?} must have 1 or 2 modes"
                    )))
                }
            };
            for m in [a, b] {
                if partner[m] != usize::MAX {
                    return Err(Error::InvalidPairing(format!(
                        "mode {} appears in more than one block",
                        m + 1
                    )));
                }
            }
            partner[a] = b;
            partner[b] = a;
        }
        if let Some(m) = partner.iter().position(|&p| p == usize::MAX) {
            return Err(Error::InvalidPairing(format!(
                "mode {} is not covered",
                m + 1
            )));
        }
        Ok(Pairing { partner })
    }

    /// Builds a pairing from a 0-based involution.
    pub fn from_partner(partner: Vec<usize>) -> Result<Self> {
        let n = partner.len();
        if n == 0 {
            return Err(Error::InvalidPairing("no modes".into()));
        }
        for (x, &p) in partner.iter().enumerate() {
            if p >= n || partner[p] != x {
                return Err(Error::InvalidPairing(format!(
                    "mode map is not an involution at mode {}",
                    x + 1
                )));
            }
        }
        Ok(Pairing { partner })
    }

    pub fn singletons(n: usize) -> Self {
        Pairing {
            partner: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.partner.len()
    }

    /// Image of `x` under the involution (0-based).
    pub fn partner(&self, x: usize) -> usize {
        self.partner[x]
    }

    pub fn same_block(&self, x: usize, y: usize) -> bool {
        x == y || self.partner[x] == y
    }

    /// Blocks ordered by their smallest mode.
    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        self.partner
            .iter()
            .enumerate()
            .filter_map(|(x, &p)| match x.cmp(&p) {
                std::cmp::Ordering::Equal => Some(Block::Single(x)),
                std::cmp::Ordering::Less => Some(Block::Pair(x, p)),
                std::cmp::Ordering::Greater => None,
            })
    }

    pub fn pair_count(&self) -> usize {
        self.blocks()
            .filter(|b| matches!(b, Block::Pair(..)))
            .count()
    }

    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.blocks()
            .map(|b| match b {
                Block::Single(a) => vec![a + 1],
                Block::Pair(a, b) => vec![a + 1, b + 1],
            })
            .collect()
    }
}

impl TryFrom<Vec<Vec<usize>>> for Pairing {
    type Error = Error;

    fn try_from(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n = blocks.iter().map(Vec::len).sum();
        Pairing::from_blocks(n, &blocks)
    }
}

impl From<Pairing> for Vec<Vec<usize>> {
    fn from(p: Pairing) -> Self {
        p.to_one_based()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

/// One single-bricklayer slot of a D-dimensional brickwork step: side `L` or `R` along
/// a 1-based axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSlot {
    pub axis: usize,
    pub side: Side,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeometryLabel {
    Brickwall1d,
    BrickworkD {
        m: usize,
        dim: usize,
        order: Vec<LayerSlot>,
    },
    Custom,
}

impl GeometryLabel {
    pub fn name(&self) -> &'static str {
        match self {
            GeometryLabel::Brickwall1d => "brickwall1d",
            GeometryLabel::BrickworkD { .. } => "brickworkD",
            GeometryLabel::Custom => "custom",
        }
    }
}

/// The layers of one circuit step, applied first to last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    n: usize,
    layers: Vec<Pairing>,
    label: GeometryLabel,
}

impl GeometrySpec {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Layers per step.
    pub fn m(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Pairing] {
        &self.layers
    }

    pub fn label(&self) -> &GeometryLabel {
        &self.label
    }

    pub fn is_brickwall(&self) -> bool {
        self.label == GeometryLabel::Brickwall1d
    }

    /// Same layers applied in reverse order (the time-reversed walk).
    pub fn reversed(&self) -> GeometrySpec {
        GeometrySpec {
            n: self.n,
            layers: self.layers.iter().rev().cloned().collect(),
            label: GeometryLabel::Custom,
        }
    }
}

/// 1-based partner of `a` in the 1D brickwall pairing of `m` modes.
fn brick_partner(m: usize, a: usize, side: Side) -> usize {
    match side {
        Side::L => {
            if a % 2 == 1 {
                a + 1
            } else {
                a - 1
            }
        }
        Side::R => {
            if a == 1 || a == m {
                a
            } else if a.is_multiple_of(2) {
                a + 1
            } else {
                a - 1
            }
        }
    }
}

fn brick_pairing(m: usize, side: Side) -> Pairing {
    Pairing {
        partner: (1..=m).map(|a| brick_partner(m, a, side) - 1).collect(),
    }
}

/// Brickwall step on an even number of modes: `{1,2},{3,4},...` then `{1},{2,3},...,{n}`.
pub fn brickwall_geometry(n: usize) -> Result<GeometrySpec> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidGeometry(format!(
            "brickwall needs an even mode count >= 2, got {n}"
        )));
    }
    Ok(GeometrySpec {
        n,
        layers: vec![brick_pairing(n, Side::L), brick_pairing(n, Side::R)],
        label: GeometryLabel::Brickwall1d,
    })
}

/// Default slot order `L1, R1, L2, R2, ..., LD, RD`.
pub fn default_brickwork_order(dim: usize) -> Vec<LayerSlot> {
    (1..=dim)
        .flat_map(|axis| {
            [Side::L, Side::R]
                .into_iter()
                .map(move |side| LayerSlot { axis, side })
        })
        .collect()
}

/// Coordinates `(x_1, ..., x_D)` in `1..=m` of a 0-based flattened mode (axis 1 slowest).
pub fn brickwork_coords(m: usize, dim: usize, mode: usize) -> Vec<usize> {
    let mut coords = vec![0; dim];
    let mut rest = mode;
    for j in (0..dim).rev() {
        coords[j] = rest % m + 1;
        rest /= m;
    }
    coords
}

/// 0-based flattened mode of 1-based coordinates.
pub fn brickwork_index(m: usize, coords: &[usize]) -> usize {
    coords.iter().fold(0, |acc, &x| acc * m + (x - 1))
}

/// Brickwork on `m^D` modes; each slot pairs along one axis.
pub fn brickwork_d_geometry(
    m: usize,
    dim: usize,
    order: Option<Vec<LayerSlot>>,
) -> Result<GeometrySpec> {
    if m < 2 || !m.is_multiple_of(2) {
        return Err(Error::InvalidGeometry(format!(
            "brickwork side length must be even and >= 2, got {m}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidGeometry(
            "brickwork dimension must be >= 1".into(),
        ));
    }
    let n = u32::try_from(dim)
        .ok()
        .and_then(|d| m.checked_pow(d))
        .ok_or_else(|| Error::InvalidGeometry(format!("{m}^{dim} modes overflow")))?;
    let order = order.unwrap_or_else(|| default_brickwork_order(dim));
    let mut expected = default_brickwork_order(dim);
    let mut given = order.clone();
    let key = |s: &LayerSlot| (s.axis, s.side == Side::R);
    expected.sort_by_key(key);
    given.sort_by_key(key);
    if expected != given {
        return Err(Error::InvalidGeometry(format!(
            "layer order must be a permutation of the {} slots (L/R per axis 1..={dim})",
            2 * dim
        )));
    }
    let layers = order
        .iter()
        .map(|slot| {
            let partner = (0..n)
                .map(|mode| {
                    let mut c = brickwork_coords(m, dim, mode);
                    let j = slot.axis - 1;
                    c[j] = brick_partner(m, c[j], slot.side);
                    brickwork_index(m, &c)
                })
                .collect();
            Pairing { partner }
        })
        .collect();
    Ok(GeometrySpec {
        n,
        layers,
        label: GeometryLabel::BrickworkD { m, dim, order },
    })
}

/// Validated geometry from arbitrary pairings.
pub fn custom_geometry(n: usize, layers: Vec<Pairing>) -> Result<GeometrySpec> {
    if layers.is_empty() {
        return Err(Error::InvalidGeometry("at least one layer required".into()));
    }
    if let Some((j, p)) = layers.iter().enumerate().find(|(_, p)| p.n() != n) {
        return Err(Error::InvalidGeometry(format!(
            "layer {} has {} modes, expected {n}",
            j + 1,
            p.n()
        )));
    }
    Ok(GeometrySpec {
        n,
        layers,
        label: GeometryLabel::Custom,
    })
}

/// Four-layer step on 6 modes whose beamsplitter graph is the octahedron.
pub fn octahedral_geometry() -> GeometrySpec {
    let layers = [
        vec![vec![1, 2], vec![3, 5], vec![4, 6]],
        vec![vec![1, 4], vec![2, 5], vec![3, 6]],
        vec![vec![2, 3], vec![4, 5], vec![1, 6]],
        vec![vec![1, 3], vec![2, 4], vec![5, 6]],
    ]
    .iter()
    .map(|blocks| Pairing::from_blocks(6, blocks).expect("valid octahedral layer"))
    .collect();
    custom_geometry(6, layers).expect("valid octahedral geometry")
}

/// Guaranteed half-band-width `2d` of a depth-`d` brickwall unitary.
pub fn lightcone_band(geometry: &GeometrySpec, d: usize) -> Result<usize> {
    if !geometry.is_brickwall() {
        return Err(Error::UnsupportedGeometry(geometry.label.name().into()));
    }
    Ok(2 * d)
}

/// Half-band-width `4d` of `U U^T` for a depth-`d` brickwall unitary.
pub fn lightcone_band_uut(geometry: &GeometrySpec, d: usize) -> Result<usize> {
    lightcone_band(geometry, d).map(|w| 2 * w)
}

/// Geometry description as it appears in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeometryConfig {
    Brickwall,
    Brickwork {
        m: usize,
        dim: usize,
        #[serde(default)]
        order: Option<Vec<LayerSlot>>,
    },
    Custom {
        n: usize,
        layers: Vec<Vec<Vec<usize>>>,
    },
    Octahedral,
}

impl GeometryConfig {
    /// `n` is the config-level mode count, required for brickwall.
    pub fn build(&self, n: Option<usize>) -> Result<GeometrySpec> {
        match self {
            GeometryConfig::Brickwall => {
                let n = n.ok_or_else(|| {
                    Error::InvalidGeometry("brickwall geometry needs a mode count n".into())
                })?;
                brickwall_geometry(n)
            }
            GeometryConfig::Brickwork { m, dim, order } => {
                brickwork_d_geometry(*m, *dim, order.clone())
            }
            GeometryConfig::Custom { n, layers } => {
                let pairings = layers
                    .iter()
                    .map(|blocks| Pairing::from_blocks(*n, blocks))
                    .collect::<Result<_>>()?;
                custom_geometry(*n, pairings)
            }
            GeometryConfig::Octahedral => Ok(octahedral_geometry()),
        }
    }
}
