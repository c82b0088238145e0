use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::kv::KvBlock;
use super::Residence;
use crate::hardware::{PlatformSpec, RramAccess};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MigrationCost {
    pub bytes_moved: u64,
    pub joules: f64,
    pub ns: f64,
    pub blocks_moved: u32,
}

impl MigrationCost {
    pub fn combine(&self, other: &MigrationCost) -> MigrationCost {
        MigrationCost {
            bytes_moved: self.bytes_moved + other.bytes_moved,
            joules: self.joules + other.joules,
            ns: self.ns + other.ns,
            blocks_moved: self.blocks_moved + other.blocks_moved,
        }
    }
}

/// Cost of moving every block whose residence differs between the two
/// assignments. Blocks present in only one of them are ignored.
pub fn migration_cost(
    before: &[KvBlock],
    after: &[KvBlock],
    platform: &PlatformSpec,
) -> MigrationCost {
    let prior: HashMap<u32, Residence> = before.iter().map(|b| (b.id, b.residence)).collect();
    let dram = &platform.dram;
    let rram = &platform.rram;
    let mut cost = MigrationCost::default();
    for b in after {
        let Some(&from) = prior.get(&b.id) else {
            continue;
        };
        let to = b.residence;
        if from == to {
            continue;
        }
        let bits = b.bytes * 8;
        let (joules, ns) = match (from, to) {
            (Residence::DramTier(s), Residence::DramTier(d)) => (
                2.0 * dram.access_energy_j(bits),
                dram.memory_ns(b.bytes, s as usize) + dram.memory_ns(b.bytes, d as usize),
            ),
            (Residence::DramTier(s), Residence::Rram) => {
                let (link_ns, link_j) = platform.link.transfer(b.bytes);
                (
                    dram.access_energy_j(bits)
                        + rram.access_energy_j(bits, RramAccess::Write)
                        + link_j,
                    dram.memory_ns(b.bytes, s as usize) + link_ns + rram.write_ns(b.bytes),
                )
            }
            (Residence::Rram, Residence::DramTier(d)) => {
                let (link_ns, link_j) = platform.link.transfer(b.bytes);
                (
                    rram.access_energy_j(bits, RramAccess::Read)
                        + dram.access_energy_j(bits)
                        + link_j,
                    rram.memory_ns(b.bytes) + link_ns + dram.memory_ns(b.bytes, d as usize),
                )
            }
            (Residence::Rram, Residence::Rram) => unreachable!(),
        };
        cost.bytes_moved += b.bytes;
        cost.joules += joules;
        cost.ns += ns;
        cost.blocks_moved += 1;
    }
    cost
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn block(res: Residence) -> KvBlock {
        KvBlock {
            id: 7,
            layer_index: 0,
            token_range: [0, 64],
            bytes: 4096,
            hotness: 63.0,
            residence: res,
            write_count: 0,
        }
    }

    #[test]
    fn identical_plans_cost_nothing() {
        let p = presets::heterogeneous();
        let b = [block(Residence::DramTier(2))];
        assert_eq!(migration_cost(&b, &b, &p), MigrationCost::default());
    }

    #[test]
    fn tier_to_tier_is_read_plus_write() {
        let p = presets::heterogeneous();
        let c = migration_cost(
            &[block(Residence::DramTier(3))],
            &[block(Residence::DramTier(0))],
            &p,
        );
        assert_eq!(c.bytes_moved, 4096);
        assert!((c.joules - 2.0 * 32768.0 * 0.429e-12).abs() < 1e-20);
    }

    #[test]
    fn tier_to_rram_adds_write_and_link() {
        let p = presets::heterogeneous();
        let c = migration_cost(
            &[block(Residence::DramTier(4))],
            &[block(Residence::Rram)],
            &p,
        );
        let link = 32768.0 * p.link.energy_pj_per_bit * 1e-12;
        let expect = 32768.0 * 0.429e-12 + 32768.0 * 1.33e-12 + link;
        assert!((c.joules - expect).abs() < 1e-20);
    }
}
