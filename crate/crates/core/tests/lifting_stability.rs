use nbdpsk::channel::ChannelMode;
use nbdpsk::ensemble::{mc_de_threshold, DeConfig};
use nbdpsk::protograph::BaseMatrix;
use nbdpsk::receiver::ChannelConfig;

const SEEDS: [u64; 3] = [1, 2, 3];

fn mean_threshold(rows: &[Vec<u32>], ch: &ChannelConfig, lifting: usize, low_db: f64, high_db: f64) -> f64 {
    let base = BaseMatrix::from_rows(rows).unwrap();
    let total: f64 = SEEDS
        .iter()
        .map(|&seed| {
            let de = DeConfig {
                lifting,
                low_db,
                high_db,
                seed,
                ..DeConfig::default()
            };
            mc_de_threshold(&base, ch, &de).unwrap().threshold_db
        })
        .sum();
    total / SEEDS.len() as f64
}

fn assert_stable(rows: &[Vec<u32>], ch: ChannelConfig, low_db: f64, high_db: f64) {
    let full = mean_threshold(rows, &ch, 1000, low_db, high_db);
    let half = mean_threshold(rows, &ch, 500, low_db, high_db);
    eprintln!("{rows:?}: {full:.3} dB at 1000 copies, {half:.3} dB at 500");
    assert!((full - half).abs() < 0.1, "{rows:?}: {full:.3} vs {half:.3} dB");
}

fn wiener(p: u32, sigma_delta_deg: f64) -> ChannelConfig {
    ChannelConfig {
        p,
        mode: ChannelMode::Wiener,
        sigma_delta_deg,
        ..ChannelConfig::default()
    }
}

#[test]
fn rate_half_winner_is_stable_under_halved_lifting() {
    assert_stable(&[vec![2, 1]], wiener(3, 2.0), 0.0, 6.0);
}

#[test]
fn rate_two_thirds_winner_is_stable_under_halved_lifting() {
    assert_stable(&[vec![2, 2, 1]], wiener(3, 2.0), 2.0, 8.0);
}

#[test]
fn rate_three_quarters_winner_is_stable_under_halved_lifting() {
    assert_stable(&[vec![2, 2, 2, 1]], wiener(4, 1.0), 5.0, 12.0);
}
