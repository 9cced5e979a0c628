use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::types::{ClassId, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Detection,
    Classification,
}

impl Stage {
    fn tag(self) -> &'static [u8] {
        match self {
            Stage::Detection => b"detection",
            Stage::Classification => b"classification",
        }
    }
}

/// Stable 64-bit sub-seed for one (stage, class) stream.
pub fn derive_seed(master: u64, stage: Stage, class: ClassId) -> u64 {
    let digest = Sha256::new()
        .chain_update(b"snowkit/")
        .chain_update(stage.tag())
        .chain_update(master.to_le_bytes())
        .chain_update(class.0.to_le_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// `round(rho * n)` with halves rounded up.
///
/// A 1e-9 slack absorbs binary representation error, so `0.3 * 8135`
/// counts as the exact half it is in decimal.
pub fn round_half_up(rho: f64, n: u64) -> u64 {
    let k = (rho * n as f64 + 0.5 + 1e-9).floor() as u64;
    k.min(n)
}

/// Location of one instance: image index within the dataset, instance id.
pub(crate) type InstanceRef = (usize, u32);

/// Per class, the `round(rho · n_i)` instances chosen by a seeded shuffle of
/// the class's instances sorted by `(image_id, id)`, in shuffled order, plus
/// the rng positioned after the shuffle.
pub(crate) fn stratified_selection(
    dataset: &Dataset,
    rho: f64,
    master: u64,
    stage: Stage,
) -> BTreeMap<ClassId, (Vec<InstanceRef>, ChaCha8Rng)> {
    let mut by_class: BTreeMap<ClassId, Vec<(&str, u32, usize)>> = BTreeMap::new();
    for (idx, img) in dataset.images.iter().enumerate() {
        for (&id, &class) in &img.classes {
            by_class
                .entry(class)
                .or_default()
                .push((img.image_id.as_str(), id, idx));
        }
    }
    by_class
        .into_iter()
        .map(|(class, mut members)| {
            members.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, stage, class));
            members.shuffle(&mut rng);
            let k = round_half_up(rho, members.len() as u64) as usize;
            let chosen = members[..k].iter().map(|&(_, id, idx)| (idx, id)).collect();
            (class, (chosen, rng))
        })
        .collect()
}
