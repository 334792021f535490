//! Binary checkpoint: `AGSW` magic, format version, entry count, then named
//! entries. Networks store their layer shapes and row-major parameters,
//! optimizers their hyperparameters, step counter and moments. All numbers
//! are little-endian; reals are raw IEEE-754 bits.

use std::io::{Read, Write};
use std::path::Path;

use super::{Adam, Mlp, OutputActivation};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"AGSW";

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Net(Mlp),
    Optimizer(Adam),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub entries: Vec<(String, Entry)>,
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64s(w: &mut impl Write, vs: &[f64]) -> Result<()> {
    put_u64(w, vs.len() as u64)?;
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| Error::Checkpoint(format!("truncated: {e}")))?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(get(r)?))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(get(r)?))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(get(r)?))
}

fn get_f64s(r: &mut impl Read) -> Result<Vec<f64>> {
    let n = get_u64(r)?;
    if n > 1 << 32 {
        return Err(Error::Checkpoint(format!("implausible vector length {n}")));
    }
    (0..n).map(|_| get_f64(r)).collect()
}

impl Checkpoint {
    pub fn push_net(&mut self, name: impl Into<String>, net: &Mlp) {
        self.entries.push((name.into(), Entry::Net(net.clone())));
    }

    pub fn push_optimizer(&mut self, name: impl Into<String>, opt: &Adam) {
        self.entries.push((name.into(), Entry::Optimizer(opt.clone())));
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn net(&self, name: &str) -> Result<&Mlp> {
        match self.get(name) {
            Some(Entry::Net(n)) => Ok(n),
            _ => Err(Error::Checkpoint(format!("no network named {name}"))),
        }
    }

    pub fn optimizer(&self, name: &str) -> Result<&Adam> {
        match self.get(name) {
            Some(Entry::Optimizer(o)) => Ok(o),
            _ => Err(Error::Checkpoint(format!("no optimizer named {name}"))),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(w, CHECKPOINT_VERSION)?;
        put_u32(w, self.entries.len() as u32)?;
        for (name, entry) in &self.entries {
            put_u32(w, name.len() as u32)?;
            w.write_all(name.as_bytes())?;
            match entry {
                Entry::Net(net) => {
                    w.write_all(&[0])?;
                    match net.output_activation() {
                        OutputActivation::Identity => {
                            w.write_all(&[0])?;
                            w.write_all(&0f64.to_le_bytes())?;
                        }
                        OutputActivation::ScaledTanh(s) => {
                            w.write_all(&[1])?;
                            w.write_all(&s.to_le_bytes())?;
                        }
                    }
                    put_u32(w, net.sizes().len() as u32)?;
                    for &s in net.sizes() {
                        put_u32(w, s as u32)?;
                    }
                    put_f64s(w, net.params())?;
                }
                Entry::Optimizer(o) => {
                    w.write_all(&[1])?;
                    for v in [o.lr, o.beta1, o.beta2, o.eps] {
                        w.write_all(&v.to_le_bytes())?;
                    }
                    put_u64(w, o.step)?;
                    put_f64s(w, &o.m)?;
                    put_f64s(w, &o.v)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        if &get::<4>(r)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = get_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = get_u32(r)?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let len = get_u32(r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name).map_err(|e| Error::Checkpoint(format!("truncated: {e}")))?;
            let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?;
            let entry = match get::<1>(r)?[0] {
                0 => {
                    let tag = get::<1>(r)?[0];
                    let scale = get_f64(r)?;
                    let output = match tag {
                        0 => OutputActivation::Identity,
                        1 => OutputActivation::ScaledTanh(scale),
                        t => return Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
                    };
                    let n = get_u32(r)? as usize;
                    let sizes = (0..n).map(|_| get_u32(r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
                    let params = get_f64s(r)?;
                    Entry::Net(Mlp::from_params(&sizes, output, params).map_err(|e| Error::Checkpoint(e.to_string()))?)
                }
                1 => {
                    let (lr, beta1, beta2, eps) = (get_f64(r)?, get_f64(r)?, get_f64(r)?, get_f64(r)?);
                    let step = get_u64(r)?;
                    let m = get_f64s(r)?;
                    let v = get_f64s(r)?;
                    if m.len() != v.len() {
                        return Err(Error::Checkpoint(format!("optimizer {name}: moment lengths differ")));
                    }
                    Entry::Optimizer(Adam { lr, beta1, beta2, eps, step, m, v })
                }
                k => return Err(Error::Checkpoint(format!("unknown entry kind {k}"))),
            };
            entries.push((name, entry));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::Rng;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = Rng::seed_from_u64(4);
        let actor = Mlp::random(&[17, 64, 64, 2], OutputActivation::ScaledTanh(10.0), &mut rng).unwrap();
        let critic = Mlp::random(&[19, 64, 64, 1], OutputActivation::Identity, &mut rng).unwrap();
        let mut opt = Adam::new(critic.params().len(), 1e-5, 0.9, 0.999, 1e-8);
        let mut p = critic.params().to_vec();
        let g: Vec<f64> = p.iter().map(|v| v.sin()).collect();
        opt.step(&mut p, &g).unwrap();

        let mut ck = Checkpoint::default();
        ck.push_net("c0/actor", &actor);
        ck.push_net("c0/critic", &critic);
        ck.push_optimizer("c0/critic_opt", &opt);
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.net("c0/actor").unwrap().params()), bits(actor.params()));
        assert_eq!(back.net("c0/critic").unwrap().sizes(), critic.sizes());
        assert_eq!(back.optimizer("c0/critic_opt").unwrap(), &opt);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn rejects_corruption() {
        let mut ck = Checkpoint::default();
        ck.push_net("n", &Mlp::zeros(&[2, 1], OutputActivation::Identity).unwrap());
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::read_from(&mut bad.as_slice()), Err(Error::Checkpoint(_))));
        let short = &bytes[..bytes.len() - 3];
        assert!(matches!(Checkpoint::read_from(&mut &short[..]), Err(Error::Checkpoint(_))));
    }
}
