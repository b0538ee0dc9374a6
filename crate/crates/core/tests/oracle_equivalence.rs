use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use vmpc::dealer::SeededMaterial;
use vmpc::session::{run_loopback, NetworkConfig, SessionConfig};
use vmpc::synth::{synthesize, SynthSpec};
use vmpc::truth::mpc::{reconstruct_state, share_answers};
use vmpc::truth::{labels, plain, AlgoConfig, Algorithm, Variant};
use vmpc::{PartyId, ProtocolConfig};

const VARIANTS: [(Algorithm, Variant); 4] = [
    (Algorithm::ThreeEstimates, Variant::H),
    (Algorithm::ThreeEstimates, Variant::MinMax),
    (Algorithm::Cosine, Variant::Base),
    (Algorithm::Cosine, Variant::Fast),
];

fn instance(seed: u64) -> SynthSpec {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    use rand::Rng;
    let n = rng.gen_range(5..=30);
    let k = rng.gen_range(8..=60);
    SynthSpec::uniform(seed, n, k, 0.3, 0.95, 0.3)
}

/// Largest elementwise deviation and number of label disagreements outside
/// the tie margin.
fn compare(alg: Algorithm, var: Variant, seed: u64) -> (f64, usize) {
    compare_with(ProtocolConfig::default(), alg, var, seed)
}

fn compare_with(protocol: ProtocolConfig, alg: Algorithm, var: Variant, seed: u64) -> (f64, usize) {
    let (a, _) = synthesize(&instance(seed)).unwrap();
    let algo = AlgoConfig::new(alg, var, 10).unwrap();
    let want = plain::run_state(&a, &algo).unwrap();
    let cfg = SessionConfig {
        session_id: seed,
        algorithm: alg,
        variant: var,
        iterations: 10,
        n: a.sources(),
        k: a.facts(),
        protocol,
        network: NetworkConfig::default(),
    };
    let (s1, s2) = share_answers(&cfg.protocol.ring, &a, &mut ChaCha20Rng::seed_from_u64(seed + 1));
    let p = cfg.protocol.ring;
    let (r1, r2) = run_loopback(
        &cfg,
        [&s1, &s2],
        [Box::new(SeededMaterial::new(p, seed, PartyId::One)), Box::new(SeededMaterial::new(p, seed, PartyId::Two))],
    )
    .unwrap();
    let got = reconstruct_state(&p, alg, cfg.n, cfg.k, &r1.outputs, &r2.outputs, 10).unwrap();
    let err = want.flatten().iter().zip(got.flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let threshold = if alg == Algorithm::Cosine { 0.0 } else { 0.5 };
    let flips = labels(alg, &want.y)
        .iter()
        .zip(labels(alg, &got.y))
        .zip(&want.y)
        .filter(|((a, b), y)| **a != *b && (**y - threshold).abs() > 1e-3)
        .count();
    (err, flips)
}

#[test]
fn secure_runs_track_plain_runs() {
    let mut failures = Vec::new();
    for (alg, var) in VARIANTS {
        let mut worst: f64 = 0.0;
        for seed in 0..20 {
            let (err, flips) = compare(alg, var, seed);
            worst = worst.max(err);
            if err > 1e-3 || flips > 0 {
                failures.push(format!("{alg} {var} seed {seed}: max err {err:.2e}, flips {flips}"));
            }
        }
        eprintln!("{alg} {var}: worst {worst:.2e}");
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn exact_truncation_also_tracks() {
    use vmpc::TruncationMode;
    let protocol = ProtocolConfig { truncation: TruncationMode::Exact, ..Default::default() };
    for (alg, var) in VARIANTS {
        for seed in 0..3 {
            let (err, flips) = compare_with(protocol, alg, var, seed);
            assert!(err <= 1e-3 && flips == 0, "{alg} {var} seed {seed}: {err:.2e}, {flips}");
        }
    }
}
