mod common;

use futrl::env::{reward, ContractData, ReturnConvention, RewardConfig};
use proptest::prelude::*;

fn actions(seed: u64, n: usize, continuous: bool) -> Vec<f64> {
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (x >> 11) as f64 / (1u64 << 53) as f64;
            if continuous {
                2.0 * u - 1.0
            } else {
                (u * 3.0).floor() - 1.0
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rewards_do_not_depend_on_price_scale(seed in 0u64..1000, k in prop::sample::select(vec![0.01, 0.37, 1.0, 12.5, 1000.0]), continuous: bool) {
        let s = common::series("S", 520, 0.25, seed);
        let a = ContractData::new(s.clone()).unwrap();
        let b = ContractData::new(s.scaled(k).unwrap()).unwrap();
        let pos = actions(seed, 200, continuous);
        let cfg = RewardConfig::default();
        let ra = a.account(&cfg, 300, &pos).unwrap();
        let rb = b.account(&cfg, 300, &pos).unwrap();
        for (x, y) in ra.iter().zip(&rb) {
            prop_assert!((x.reward - y.reward).abs() < 1e-9);
        }
    }

    #[test]
    fn total_reward_non_increasing_in_cost(seed in 0u64..1000, bp1 in 0.0f64..0.003, extra in 0.0f64..0.003) {
        let c = common::contract("S", 500, seed);
        let pos = actions(seed, 150, seed % 2 == 0);
        let total = |bp: f64| -> f64 {
            c.account(&RewardConfig::default().with_bp(bp), 320, &pos).unwrap().iter().map(|r| r.reward).sum()
        };
        prop_assert!(total(bp1 + extra) <= total(bp1));
    }

    #[test]
    fn flat_positions_earn_nothing(seed in 0u64..1000, additive: bool) {
        let c = common::contract("S", 420, seed);
        let cfg = RewardConfig {
            convention: if additive { ReturnConvention::Additive } else { ReturnConvention::Percentage },
            ..RewardConfig::default()
        };
        let rows = c.account(&cfg, 100, &[0.0; 300]).unwrap();
        prop_assert!(rows.iter().all(|r| r.reward == 0.0 && r.cost == 0.0));
    }

    #[test]
    fn holding_is_free(a in -1.0f64..1.0, sigma in 1e-3f64..0.05, p0 in 1.0f64..500.0, p1 in 1.0f64..500.0, bp in 0.0f64..0.01) {
        let cfg = RewardConfig::default().with_bp(bp);
        let r = reward(&cfg, p0, p1, sigma, sigma, a, a);
        prop_assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn reversal_costs_double(sigma in 1e-3f64..0.05, p0 in 1.0f64..500.0, p1 in 1.0f64..500.0, bp in 0.0f64..0.01, additive: bool) {
        let cfg = RewardConfig {
            bp,
            convention: if additive { ReturnConvention::Additive } else { ReturnConvention::Percentage },
            ..RewardConfig::default()
        };
        let flip = reward(&cfg, p0, p1, sigma, sigma, -1.0, 1.0);
        let open = reward(&cfg, p0, p1, sigma, sigma, -1.0, 0.0);
        prop_assert_eq!(flip.cost, 2.0 * open.cost);
    }
}
