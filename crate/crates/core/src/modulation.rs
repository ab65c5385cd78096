//! Constellations (M-PSK, M-APSK), Gray labeling, differential encoding and
//! the shared reference-phase schedule.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phasespace::{canonical_phase, rad};
use crate::seed::{derive, mix64, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Psk,
    Apsk,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ring {
    pub scale: f64,
    pub num_phases: u32,
}

impl Ring {
    pub fn spacing(&self) -> f64 {
        TAU / self.num_phases as f64
    }
}

/// A fixed-width group of key bits carried by one symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymbolWord {
    value: u32,
    width: u32,
}

impl SymbolWord {
    pub fn new(value: u32, width: u32) -> Result<Self> {
        if width == 0 || width > 16 {
            return Err(Error::Domain(format!("unsupported symbol width {width}")));
        }
        if value >> width != 0 {
            return Err(Error::Domain(format!("value {value} does not fit in {width} bits")));
        }
        Ok(Self { value, width })
    }

    /// Most significant bit first.
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let value = bits.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
        Self::new(value, bits.len() as u32)
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// Most significant bit first.
    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.width).rev().map(move |i| (self.value >> i) & 1 == 1)
    }

    pub fn bit_string(&self) -> String {
        self.bits().map(|b| if b { '1' } else { '0' }).collect()
    }
}

/// A modulation scheme with its Gray-labeled symbol map.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheme {
    kind: SchemeKind,
    rings: Vec<Ring>,
    bits_per_symbol: u32,
    /// `labels[ring][position]` is the word carried by that point.
    labels: Vec<Vec<u32>>,
    /// Inverse of `labels`, indexed by word value.
    points: Vec<(usize, usize)>,
}

impl Scheme {
    /// M-PSK with the reflected binary Gray code.
    pub fn psk(num_phases: u32) -> Result<Self> {
        if num_phases < 2 || !num_phases.is_power_of_two() {
            return Err(Error::Config(format!(
                "PSK needs a power-of-two phase count >= 2, got {num_phases}"
            )));
        }
        let labels = vec![(0..num_phases).map(|i| i ^ (i >> 1)).collect()];
        Self::assemble(
            SchemeKind::Psk,
            vec![Ring {
                scale: 1.0,
                num_phases,
            }],
            labels,
        )
    }

    /// M-APSK with concentric rings, each Gray-labeled cyclically.
    pub fn apsk(rings: Vec<Ring>) -> Result<Self> {
        if rings.is_empty() {
            return Err(Error::Config("APSK needs at least one ring".into()));
        }
        for pair in rings.windows(2) {
            if pair[1].scale <= pair[0].scale {
                return Err(Error::Config("ring scales must be strictly increasing".into()));
            }
        }
        if rings.iter().any(|r| !(r.scale.is_finite() && r.scale > 0.0)) {
            return Err(Error::Config("ring scales must be positive".into()));
        }
        if rings.iter().any(|r| r.num_phases == 0) {
            return Err(Error::Config("every ring needs at least one phase".into()));
        }
        let total: u32 = rings.iter().map(|r| r.num_phases).sum();
        if !total.is_power_of_two() || total < 2 {
            return Err(Error::Config(format!(
                "APSK point count must be a power of two, got {total}"
            )));
        }
        let width = total.trailing_zeros();
        let sizes: Vec<usize> = rings.iter().map(|r| r.num_phases as usize).collect();
        let labels = gray_cycles(width, &sizes).ok_or_else(|| {
            Error::Config(format!("no cyclic Gray labeling exists for ring sizes {sizes:?}"))
        })?;
        Self::assemble(SchemeKind::Apsk, rings, labels)
    }

    /// 4 + 12 layout with outer/inner ratio 2.57.
    pub fn apsk16() -> Self {
        Self::apsk(vec![
            Ring {
                scale: 1.0,
                num_phases: 4,
            },
            Ring {
                scale: 2.57,
                num_phases: 12,
            },
        ])
        .expect("valid default layout")
    }

    /// 4 + 4 layout with outer/inner ratio 2.
    pub fn apsk8() -> Self {
        Self::apsk(vec![
            Ring {
                scale: 1.0,
                num_phases: 4,
            },
            Ring {
                scale: 2.0,
                num_phases: 4,
            },
        ])
        .expect("valid default layout")
    }

    fn assemble(kind: SchemeKind, rings: Vec<Ring>, labels: Vec<Vec<u32>>) -> Result<Self> {
        let total: usize = labels.iter().map(Vec::len).sum();
        let bits_per_symbol = total.trailing_zeros();
        let mut points = vec![(usize::MAX, usize::MAX); total];
        for (r, ring_labels) in labels.iter().enumerate() {
            for (p, &w) in ring_labels.iter().enumerate() {
                points[w as usize] = (r, p);
            }
        }
        debug_assert!(points.iter().all(|&(r, _)| r != usize::MAX));
        Ok(Self {
            kind,
            rings,
            bits_per_symbol,
            labels,
            points,
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn rings(&self) -> &[Ring] {
        &self.rings
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    pub fn num_symbols(&self) -> usize {
        self.points.len()
    }

    /// Phases per ring for PSK; the largest ring count for APSK.
    pub fn num_phases(&self) -> u32 {
        self.rings.iter().map(|r| r.num_phases).max().unwrap_or(0)
    }

    pub fn max_scale(&self) -> f64 {
        self.rings.last().map(|r| r.scale).unwrap_or(1.0)
    }

    /// Smallest angular distance between neighbouring points on any ring.
    pub fn min_spacing(&self) -> f64 {
        self.rings
            .iter()
            .map(Ring::spacing)
            .fold(f64::INFINITY, f64::min)
    }

    /// The < 20° spacing guideline for resisting two-point tapping.
    pub fn meets_spacing_guideline(&self) -> bool {
        self.min_spacing() < rad(20.0)
    }

    pub fn word(&self, value: u32) -> Result<SymbolWord> {
        SymbolWord::new(value, self.bits_per_symbol)
    }

    /// (ring, position) of a word.
    pub fn point_of(&self, word: SymbolWord) -> Result<(usize, usize)> {
        self.check_width(word)?;
        Ok(self.points[word.value as usize])
    }

    pub fn word_at(&self, ring: usize, position: usize) -> SymbolWord {
        SymbolWord {
            value: self.labels[ring][position],
            width: self.bits_per_symbol,
        }
    }

    /// Ideal (phase, scale) of a word.
    pub fn encode(&self, word: SymbolWord) -> Result<(f64, f64)> {
        let (r, p) = self.point_of(word)?;
        let ring = self.rings[r];
        Ok((canonical_phase(p as f64 * ring.spacing()), ring.scale))
    }

    /// Nearest-point decision. The ring is picked by nearest scale, then the
    /// phase position by circular distance; exact ties go to the lower ring
    /// and the lower position index.
    pub fn decode(&self, delta_phase: f64, scale: f64) -> SymbolWord {
        let mut ring = 0;
        let mut best = f64::INFINITY;
        for (i, r) in self.rings.iter().enumerate() {
            let d = (r.scale - scale).abs();
            if d < best {
                best = d;
                ring = i;
            }
        }
        let position = nearest_position(delta_phase, self.rings[ring].num_phases);
        self.word_at(ring, position)
    }

    fn check_width(&self, word: SymbolWord) -> Result<()> {
        if word.width != self.bits_per_symbol {
            return Err(Error::WidthMismatch {
                expected: self.bits_per_symbol,
                got: word.width,
            });
        }
        Ok(())
    }
}

fn nearest_position(phase: f64, num_phases: u32) -> usize {
    let m = num_phases as usize;
    if m == 1 {
        return 0;
    }
    let x = phase.rem_euclid(TAU) / (TAU / m as f64);
    let lo = x.floor();
    let frac = x - lo;
    let lo = (lo as usize) % m;
    let hi = (lo + 1) % m;
    if frac < 0.5 {
        lo
    } else if frac > 0.5 {
        hi
    } else {
        lo.min(hi)
    }
}

/// Finds disjoint cycles in the `width`-cube with the requested lengths,
/// so that neighbours on every ring differ in exactly one bit. Each ring
/// starts at the smallest unused code; search is deterministic.
fn gray_cycles(width: u32, sizes: &[usize]) -> Option<Vec<Vec<u32>>> {
    fn extend(
        width: u32,
        sizes: &[usize],
        ring: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<u32>,
        done: &mut Vec<Vec<u32>>,
    ) -> bool {
        if ring == sizes.len() {
            return true;
        }
        let target = sizes[ring];
        if current.is_empty() {
            let Some(start) = used.iter().position(|u| !u) else {
                return false;
            };
            used[start] = true;
            current.push(start as u32);
            if extend(width, sizes, ring, used, current, done) {
                return true;
            }
            current.pop();
            used[start] = false;
            return false;
        }
        if current.len() == target {
            let first = current[0];
            let last = *current.last().unwrap();
            let closes = target <= 2 || (first ^ last).count_ones() == 1;
            if !closes {
                return false;
            }
            done.push(std::mem::take(current));
            if extend(width, sizes, ring + 1, used, current, done) {
                return true;
            }
            *current = done.pop().unwrap();
            return false;
        }
        let last = *current.last().unwrap();
        for bit in 0..width {
            let next = last ^ (1 << bit);
            if used[next as usize] {
                continue;
            }
            used[next as usize] = true;
            current.push(next);
            if extend(width, sizes, ring, used, current, done) {
                return true;
            }
            current.pop();
            used[next as usize] = false;
        }
        false
    }

    if sizes.iter().any(|&s| s > 2 && s % 2 == 1) {
        return None;
    }
    let mut used = vec![false; 1usize << width];
    let mut current = Vec::new();
    let mut done = Vec::new();
    extend(width, sizes, 0, &mut used, &mut current, &mut done).then_some(done)
}

/// Absolute key phase φ_k = Δφ_k + φ_R, canonicalized.
pub fn dpsk_target(delta_key: f64, reference_phase: f64) -> f64 {
    canonical_phase(delta_key + reference_phase)
}

/// Config-file form of a scheme: `kind = "psk", phases = 16` or
/// `kind = "apsk", rings = [1.0, 2.57], phases_per_ring = [4, 12]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rings: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases_per_ring: Option<Vec<u32>>,
}

impl Default for SchemeSpec {
    fn default() -> Self {
        Self::psk(16)
    }
}

impl SchemeSpec {
    pub fn psk(phases: u32) -> Self {
        Self {
            kind: SchemeKind::Psk,
            phases: Some(phases),
            rings: None,
            phases_per_ring: None,
        }
    }

    pub fn apsk(rings: Vec<f64>, phases_per_ring: Vec<u32>) -> Self {
        Self {
            kind: SchemeKind::Apsk,
            phases: None,
            rings: Some(rings),
            phases_per_ring: Some(phases_per_ring),
        }
    }

    pub fn build(&self) -> Result<Scheme> {
        match self.kind {
            SchemeKind::Psk => {
                let phases = self
                    .phases
                    .ok_or_else(|| Error::Config("scheme.phases is required for psk".into()))?;
                Scheme::psk(phases)
            }
            SchemeKind::Apsk => {
                let rings = self.rings.clone().unwrap_or_else(|| vec![1.0, 2.57]);
                let phases = self.phases_per_ring.clone().unwrap_or_else(|| vec![4, 12]);
                if rings.len() != phases.len() {
                    return Err(Error::Config(format!(
                        "scheme.rings has {} entries but scheme.phases_per_ring has {}",
                        rings.len(),
                        phases.len()
                    )));
                }
                Scheme::apsk(
                    rings
                        .into_iter()
                        .zip(phases)
                        .map(|(scale, num_phases)| Ring { scale, num_phases })
                        .collect(),
                )
            }
        }
    }
}

/// A snapshot of reference phases shared by Alice and Bob.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceList {
    pub phases: Vec<f64>,
    pub schedule_seed: u64,
    pub period: u64,
}

/// Picks the reference for a pulse: slot = PRF(seed, index) mod len.
pub fn select_reference(list: &ReferenceList, pulse_index: u64) -> Result<(f64, usize)> {
    if list.phases.is_empty() {
        return Err(Error::EmptyReferenceList);
    }
    let slot = (mix64(derive(list.schedule_seed, &[pulse_index])) % list.phases.len() as u64) as usize;
    Ok((list.phases[slot], slot))
}

pub const DEFAULT_REFRESH_PERIOD: u64 = 10_000;

/// Owner of the reference list. A size-1 book is the fixed-reference mode;
/// larger books draw fresh random phases every `period` pulses.
#[derive(Debug, Clone)]
pub struct ReferenceBook {
    size: usize,
    fixed_phase: f64,
    list_seed: u64,
    schedule_seed: u64,
    period: u64,
    epoch: Option<u64>,
    current: ReferenceList,
}

impl ReferenceBook {
    pub fn new(size: usize, fixed_phase: f64, list_seed: u64, schedule_seed: u64, period: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::EmptyReferenceList);
        }
        if period == 0 {
            return Err(Error::Config("reference refresh period must be positive".into()));
        }
        let mut book = Self {
            size,
            fixed_phase: canonical_phase(fixed_phase),
            list_seed,
            schedule_seed,
            period,
            epoch: None,
            current: ReferenceList {
                phases: Vec::new(),
                schedule_seed,
                period,
            },
        };
        book.refresh(0);
        Ok(book)
    }

    pub fn fixed(phase: f64) -> Self {
        Self::new(1, phase, 0, 0, DEFAULT_REFRESH_PERIOD).expect("valid fixed book")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_dynamic(&self) -> bool {
        self.size > 1
    }

    fn refresh(&mut self, epoch: u64) {
        if self.epoch == Some(epoch) {
            return;
        }
        let phases = if self.size == 1 {
            vec![self.fixed_phase]
        } else {
            let mut rng = SimRng::seed_from_u64(derive(self.list_seed, &[epoch]));
            (0..self.size)
                .map(|_| canonical_phase(rng.random_range(-PI..PI)))
                .collect()
        };
        self.current = ReferenceList {
            phases,
            schedule_seed: derive(self.schedule_seed, &[epoch]),
            period: self.period,
        };
        self.epoch = Some(epoch);
    }

    /// Snapshot valid for the period containing `pulse_index`.
    pub fn list_for(&mut self, pulse_index: u64) -> &ReferenceList {
        self.refresh(pulse_index / self.period);
        &self.current
    }

    pub fn reference_for(&mut self, pulse_index: u64) -> (f64, usize) {
        select_reference(self.list_for(pulse_index), pulse_index).expect("book is never empty")
    }
}
