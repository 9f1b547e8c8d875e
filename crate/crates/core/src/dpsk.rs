//! Field-to-constellation mapping, interleaving, differential phase
//! accumulation and channel adapters.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::galois::{Field, FieldElement, Pmf};

/// Bijection between field elements and PSK phase indices.
///
/// Phase index `l` stands for the constellation point `exp(j 2 pi l / m)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mapping {
    to_phase: Vec<u8>,
    to_element: Vec<u8>,
}

impl Mapping {
    /// Built-in mapping: phase index `l` carries the element whose binary
    /// label is the reflected binary code of `l`, so neighbouring phases
    /// differ in one bit. Zero sits at phase 0.
    ///
    /// For GF(8) with `1 + x + x^3` this is the table
    /// `0->0, a^0->pi/4, a^1->3pi/4, a^2->7pi/4, a^3->pi/2, a^4->pi, a^5->5pi/4, a^6->3pi/2`.
    pub fn builtin(field: &Field) -> Mapping {
        let m = field.order();
        let mut to_phase = vec![0u8; m];
        for l in 0..m {
            to_phase[l ^ (l >> 1)] = l as u8;
        }
        Mapping::from_phase_table(to_phase).expect("reflected binary code is a bijection")
    }

    /// `table[x]` is the phase index of element `x`. Rejects non-bijections.
    pub fn from_phase_table(table: Vec<u8>) -> Result<Mapping> {
        let m = table.len();
        if !m.is_power_of_two() || m < 2 {
            return Err(Error::InvalidMapping(format!("table size {m} is not a field order")));
        }
        let mut to_element = vec![u8::MAX; m];
        for (x, &l) in table.iter().enumerate() {
            let l = l as usize;
            if l >= m {
                return Err(Error::InvalidMapping(format!("phase index {l} out of range for m = {m}")));
            }
            if to_element[l] != u8::MAX {
                return Err(Error::InvalidMapping(format!(
                    "phase index {l} assigned to both {} and {x}",
                    to_element[l]
                )));
            }
            to_element[l] = x as u8;
        }
        Ok(Mapping {
            to_phase: table,
            to_element,
        })
    }

    /// Parses lines of `element phase-index`, where the element is `0`,
    /// `a^k` or `alpha^k`. `#` starts a comment.
    pub fn parse(text: &str, field: &Field) -> Result<Mapping> {
        let m = field.order();
        let mut table: Vec<Option<u8>> = vec![None; m];
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: no + 1, msg };
            let mut parts = line.split_whitespace();
            let (Some(elem), Some(phase), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err(format!("expected two fields, got '{line}'")));
            };
            let x = if elem == "0" {
                FieldElement::ZERO
            } else {
                let exp = elem
                    .strip_prefix("alpha^")
                    .or_else(|| elem.strip_prefix("a^"))
                    .ok_or_else(|| parse_err(format!("bad element '{elem}'")))?;
                let k: usize = exp.parse().map_err(|_| parse_err(format!("bad exponent '{exp}'")))?;
                if k >= m - 1 {
                    return Err(parse_err(format!("exponent {k} out of range")));
                }
                field.alpha_pow(k)
            };
            let l: usize = phase.parse().map_err(|_| parse_err(format!("bad phase index '{phase}'")))?;
            if l >= m {
                return Err(parse_err(format!("phase index {l} out of range")));
            }
            if table[x.index()].replace(l as u8).is_some() {
                return Err(parse_err(format!("element '{elem}' listed twice")));
            }
        }
        let table: Vec<u8> = table
            .into_iter()
            .enumerate()
            .map(|(x, l)| l.ok_or_else(|| Error::InvalidMapping(format!("element {x} not mapped"))))
            .collect::<Result<_>>()?;
        Mapping::from_phase_table(table)
    }

    pub fn order(&self) -> usize {
        self.to_phase.len()
    }

    pub fn phase_index(&self, x: FieldElement) -> usize {
        self.to_phase[x.index()] as usize
    }

    pub fn element(&self, phase_index: usize) -> FieldElement {
        FieldElement(self.to_element[phase_index])
    }

    /// Reorders a pmf over field elements into one over phase indices.
    pub fn to_phase_weights(&self, field_weights: &[f64], out: &mut [f64]) {
        for (x, &w) in field_weights.iter().enumerate() {
            out[self.to_phase[x] as usize] = w;
        }
    }

    /// Reorders a pmf over phase indices into one over field elements.
    pub fn to_field_weights(&self, phase_weights: &[f64], out: &mut [f64]) {
        for (l, &w) in phase_weights.iter().enumerate() {
            out[self.to_element[l] as usize] = w;
        }
    }
}

/// Symbol interleaver: `out[i] = in[perm[i]]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl Interleaver {
    pub fn identity(n: usize) -> Interleaver {
        Interleaver {
            perm: (0..n).collect(),
            inverse: (0..n).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Interleaver {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        Interleaver::from_permutation(perm).expect("shuffle yields a permutation")
    }

    pub fn from_permutation(perm: Vec<usize>) -> Result<Interleaver> {
        let n = perm.len();
        let mut inverse = vec![usize::MAX; n];
        for (i, &p) in perm.iter().enumerate() {
            if p >= n || inverse[p] != usize::MAX {
                return Err(Error::InvalidParameter("interleaver is not a permutation".into()));
            }
            inverse[p] = i;
        }
        Ok(Interleaver { perm, inverse })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave<T: Clone>(&self, v: &[T]) -> Vec<T> {
        self.perm.iter().map(|&p| v[p].clone()).collect()
    }

    pub fn deinterleave<T: Clone>(&self, c: &[T]) -> Vec<T> {
        self.inverse.iter().map(|&i| c[i].clone()).collect()
    }

    /// Interleaves blocks of `m` values.
    pub fn interleave_flat(&self, v: &[f64], m: usize, out: &mut [f64]) {
        for (i, &p) in self.perm.iter().enumerate() {
            out[i * m..(i + 1) * m].copy_from_slice(&v[p * m..(p + 1) * m]);
        }
    }

    pub fn deinterleave_flat(&self, c: &[f64], m: usize, out: &mut [f64]) {
        for (i, &p) in self.perm.iter().enumerate() {
            out[p * m..(p + 1) * m].copy_from_slice(&c[i * m..(i + 1) * m]);
        }
    }
}

/// Per-position field offsets added to the codeword before transmission.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdapterSequence {
    values: Vec<FieldElement>,
}

impl AdapterSequence {
    pub fn zeros(n: usize) -> AdapterSequence {
        AdapterSequence {
            values: vec![FieldElement::ZERO; n],
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, order: usize, rng: &mut R) -> AdapterSequence {
        AdapterSequence {
            values: (0..n).map(|_| FieldElement(rng.random_range(0..order) as u8)).collect(),
        }
    }

    pub fn from_values(values: Vec<FieldElement>) -> AdapterSequence {
        AdapterSequence { values }
    }

    pub fn values(&self) -> &[FieldElement] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `w_i = v_i + t_i`.
pub fn apply_adapter(v: &[FieldElement], t: &AdapterSequence) -> Result<Vec<FieldElement>> {
    check_len(t.len(), v.len())?;
    Ok(v.iter().zip(&t.values).map(|(a, b)| FieldElement(a.0 ^ b.0)).collect())
}

/// Turns pmfs on `v_i + t_i` into pmfs on `v_i`. The same map goes the other way.
pub fn deadapt_pmfs(pmfs: &[Pmf], t: &AdapterSequence) -> Result<Vec<Pmf>> {
    check_len(t.len(), pmfs.len())?;
    Ok(pmfs.iter().zip(&t.values).map(|(p, &ti)| p.permute_add(ti)).collect())
}

/// In-place [`deadapt_pmfs`] on blocks of `m` weights.
pub fn deadapt_flat(flat: &mut [f64], m: usize, t: &AdapterSequence) {
    let mut tmp = vec![0.0; m];
    for (block, &ti) in flat.chunks_exact_mut(m).zip(&t.values) {
        if ti.is_zero() {
            continue;
        }
        let s = ti.index();
        for x in 0..m {
            tmp[x] = block[x ^ s];
        }
        block.copy_from_slice(&tmp);
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch { expected, found });
    }
    Ok(())
}

/// Differentially encoded phase indices `0..m` for already interleaved symbols `c`.
///
/// Returns `N + 1` indices; the first is the reference symbol at phase 0.
pub fn accumulate(c: &[FieldElement], mapping: &Mapping) -> Vec<usize> {
    let m = mapping.order();
    let mut out = Vec::with_capacity(c.len() + 1);
    let mut acc = 0;
    out.push(acc);
    for &x in c {
        acc = (acc + mapping.phase_index(x)) % m;
        out.push(acc);
    }
    out
}

/// Interleaves, maps and accumulates a codeword into `N + 1` transmit phases (radians).
pub fn modulate(v: &[FieldElement], interleaver: &Interleaver, mapping: &Mapping) -> Result<Vec<f64>> {
    check_len(interleaver.len(), v.len())?;
    let m = mapping.order() as f64;
    Ok(accumulate(&interleaver.interleave(v), mapping)
        .into_iter()
        .map(|l| TAU * l as f64 / m)
        .collect())
}
