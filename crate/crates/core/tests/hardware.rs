use chipsim::hardware::{LatencyPolicy, LinkSpec, RramAccess};
use chipsim::{presets, Error, PlatformSpec};
use proptest::prelude::*;

#[test]
fn dram_peak_derivation() {
    let c = presets::heterogeneous().dram.peak_flops_check();
    // 16 PUs x 16 PEs x 2x2 MACs x 2 FLOPs x 1 GHz
    assert_eq!(c.derived_flops, 16.0 * 16.0 * 4.0 * 2.0 * 1e9);
    assert!((c.derived_flops - 2e12).abs() / 2e12 < 0.03);
    assert!(!c.mismatch);
}

#[test]
fn rram_bandwidth_derivation() {
    let p = presets::heterogeneous();
    assert_eq!(p.rram.derived_bw_bytes_per_s(), 8.0 * 512.0 / 8.0 * 1e9);
    assert_eq!(p.rram.derived_bw_bytes_per_s(), p.rram.peak_bw_bytes_per_s);
}

#[test]
fn rram_compute_mismatch_is_flagged() {
    let p = presets::heterogeneous();
    let c = p.rram.peak_flops_check();
    assert!(c.mismatch);
    assert!(p.cross_check_notes().iter().any(|n| n.contains("rram")));
}

#[test]
fn layer_latency_endpoints() {
    let d = presets::heterogeneous().dram;
    assert!((d.layer_latency_ns(0) - 3.0).abs() < 1e-12);
    assert!((d.layer_latency_ns(199) - 162.2).abs() < 1e-9);
}

#[test]
fn tier_latency_policies() {
    let d = presets::heterogeneous().dram;
    let worst = d
        .tier_access_latency_ns(4, LatencyPolicy::WorstLayer)
        .unwrap();
    assert!((worst - 162.2).abs() < 1e-9);
    let mean = d
        .tier_access_latency_ns(0, LatencyPolicy::MeanLayer)
        .unwrap();
    assert!((mean - (3.0 + 0.8 * 19.5)).abs() < 1e-9);
    assert!(matches!(
        d.tier_access_latency_ns(5, LatencyPolicy::MeanLayer),
        Err(Error::TierOutOfRange { tier: 5, tiers: 5 })
    ));
}

#[test]
fn access_energies() {
    let p = presets::heterogeneous();
    // one 32 Kb row buffer
    assert!((p.dram.access_energy_j(32768) - 32768.0 * 0.429e-12).abs() < 1e-18);
    assert!((p.rram.access_energy_j(8, RramAccess::Write) - 8.0 * 1.33e-12).abs() < 1e-20);
}

#[test]
fn saturated_link_is_about_one_watt() {
    let l = presets::heterogeneous().link;
    let (ns, j) = l.transfer(l.bandwidth_bytes_per_s as u64);
    assert!((ns - (1e9 + l.latency_ns)).abs() < 1e-3);
    assert!((j - 1.0).abs() < 1e-9);
}

#[test]
fn link_serialization() {
    let l = LinkSpec {
        bandwidth_bytes_per_s: 128e9,
        energy_pj_per_bit: 1.0,
        latency_ns: 2.0,
    };
    let (ns, j) = l.transfer(4096);
    assert!((ns - 34.0).abs() < 1e-9);
    assert!((j - 4096.0 * 8.0 * 1e-12).abs() < 1e-20);
    assert_eq!(l.transfer(0), (2.0, 0.0));
}

#[test]
fn capacity_check_reports_units() {
    let c = presets::heterogeneous().capacity_check();
    assert!(c.dram_consistent);
    assert_eq!(c.dram_organization_bytes, 5 * (5 << 28));
    assert_eq!(c.rram_organization_bytes, 16 << 30);
}

#[test]
fn presets_round_trip() {
    for p in [presets::heterogeneous(), presets::dram_only()] {
        let back = PlatformSpec::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }
}

#[test]
fn invalid_platform_names_field() {
    let mut v: serde_json::Value =
        serde_json::from_str(&presets::heterogeneous().to_json()).unwrap();
    v["dram"]["tiers"] = 3.into();
    let err = PlatformSpec::from_json(&v.to_string()).unwrap_err();
    assert!(err.to_string().contains("tiers"), "{err}");
}

proptest! {
    #[test]
    fn tiers_get_slower_with_height(
        tiers in 1u32..=8,
        per_tier in 1u32..60,
        base in 0.5f64..10.0,
        slope in 0.01f64..2.0,
        worst in any::<bool>(),
        bytes in 1u64..(1 << 24),
    ) {
        let mut d = presets::heterogeneous().dram;
        d.tiers = tiers;
        d.layers = tiers * per_tier;
        d.latency_base_ns = base;
        d.latency_slope_ns = slope;
        d.latency_policy = if worst { LatencyPolicy::WorstLayer } else { LatencyPolicy::MeanLayer };
        for t in 1..tiers as usize {
            prop_assert!(d.tier_latency_ns(t) > d.tier_latency_ns(t - 1));
            prop_assert!(d.memory_ns(bytes, t) > d.memory_ns(bytes, t - 1));
        }
        for t in 0..tiers as usize {
            prop_assert!(d.memory_ns(2 * bytes, t) >= d.memory_ns(bytes, t));
        }
    }

    #[test]
    fn energy_is_linear_in_bits(bits in 0u64..(1 << 40), k in 1u64..64) {
        let p = presets::heterogeneous();
        let rel = |a: f64, b: f64| if b == 0.0 { a == 0.0 } else { ((a - b) / b).abs() < 1e-12 };
        prop_assert!(rel(p.dram.access_energy_j(k * bits), k as f64 * p.dram.access_energy_j(bits)));
        for kind in [RramAccess::Read, RramAccess::Write] {
            prop_assert!(rel(p.rram.access_energy_j(k * bits, kind), k as f64 * p.rram.access_energy_j(bits, kind)));
        }
        let bytes = bits / 8;
        prop_assert!(rel(p.link.energy_j(k * bytes), k as f64 * p.link.energy_j(bytes)));
    }
}
