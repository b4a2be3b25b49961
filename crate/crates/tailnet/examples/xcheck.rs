// convergence-rate sweep across seeds, coordinates and rho levels
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use tailnet::dependence::{estimate_local_gauss, Bandwidth, FitConfig};

fn main() {
    let mut nonconv = 0;
    let mut total = 0;
    let mut max_iter_seen = 0usize;
    for rho in [0.0, 0.5, 0.8] {
        for seed in 0..12u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(7000 + seed);
            let n = 5000;
            let data: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    (z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2)
                })
                .collect();
            let bw = Bandwidth::symmetric(1.75 * (n as f64).powf(-1.0 / 6.0));
            for coord in [-1.645, -1.5, -1.0, 0.0, 1.0, 1.5, 1.645] {
                let fit = estimate_local_gauss(&data, (coord, coord), bw, &FitConfig::default()).unwrap();
                total += 1;
                if !fit.converged {
                    nonconv += 1;
                    println!("NONCONV rho={rho} seed={seed} coord={coord} -> {:.4}", fit.rho);
                }
            }
        }
    }
    let _ = max_iter_seen;
    println!("non-converged {nonconv}/{total}");
}
