use repgame::game::{Action, Benchmark, History, Role};
use repgame::planners::{exact_best_response, psbr_decide, PlannerConfig};
use repgame::rng::Streams;
use repgame::sim::{run_match, AgentKind, MatchConfig};
use repgame::strategy::{find, menu, MenuGame};
use repgame::LabelPosterior;

const GAMMA: f64 = 0.95;
const H: u32 = 20;

fn point_posterior(game: MenuGame, label: &str) -> LabelPosterior {
    LabelPosterior::new(menu(game, Role::Second), 1.0)
        .unwrap()
        .with_prior_boost(label, 1e6)
        .unwrap()
}

/// Best H-round menu rollout against a deterministic opponent, vs the infinite-horizon optimum.
///
/// With V the per-period optimum and [lo, hi] the payoff range:
///   best_H <= V/(1-g) - g^H lo/(1-g)          (truncating the optimum)
///   best_H >= V/(1-g) - g^H hi/(1-g)          (the menu holds an optimal policy here)
fn sandwich(bench: Benchmark, game: MenuGame, opp: &str) {
    let u = bench.spec().own_payoffs(Role::First);
    let own = menu(game, Role::First);
    let post = point_posterior(game, opp);
    let cfg = PlannerConfig {
        horizon: H,
        gamma: GAMMA,
        total_rounds: 10_000,
        ..Default::default()
    };
    let tr = psbr_decide(&u, &own, &History::new(), 1, &post, &cfg, &Streams::new(1)).unwrap();
    assert_eq!(tr.sampled_label, opp);
    let best = tr.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let opp_menu = menu(game, Role::Second);
    let opp_spec = find(&opp_menu, opp).unwrap();
    let vf = exact_best_response(&u, opp_spec, GAMMA, 1e-12).unwrap();
    let total = vf.initial().0 / (1.0 - GAMMA);
    let tail = GAMMA.powi(H as i32) / (1.0 - GAMMA);
    assert!(best <= total - tail * u.min() + 1e-8, "{opp}: {best} > {}", total - tail * u.min());
    assert!(best >= total - tail * u.max() - 1e-8, "{opp}: {best} < {}", total - tail * u.max());
}

#[test]
fn pd_rollout_within_exact_bounds() {
    for opp in ["allc", "alld", "tft", "grim_trigger", "wsls"] {
        sandwich(Benchmark::Pd, MenuGame::Pd, opp);
    }
}

#[test]
fn other_games_rollout_within_exact_bounds() {
    sandwich(Benchmark::Promo, MenuGame::Promo, "mad0");
    sandwich(Benchmark::Promo, MenuGame::Promo, "mad1");
    sandwich(Benchmark::Bos, MenuGame::Bos, "insist_j");
    sandwich(Benchmark::Bos, MenuGame::Bos, "alternate_phase0");
    sandwich(Benchmark::Lemons, MenuGame::Lemons, "grim_boycott");
    sandwich(Benchmark::Samaritan, MenuGame::Samaritan, "grim_shirk_after_nohelp");
}

#[test]
fn base_agents_play_uniformly() {
    // Promo has three actions per player; Pearson chi-square with 2 dof
    let mut counts = [[0u32; 3]; 2];
    for seed in 0..10 {
        let mut cfg = MatchConfig::new(Benchmark::Promo, [AgentKind::Base, AgentKind::Base]);
        cfg.seed = seed;
        let h = run_match(&cfg).unwrap().history().unwrap();
        for j in h.rounds() {
            counts[0][j.0.index()] += 1;
            counts[1][j.1.index()] += 1;
        }
    }
    for c in counts {
        let n: u32 = c.iter().sum();
        let e = f64::from(n) / 3.0;
        let chi2: f64 = c.iter().map(|&k| (f64::from(k) - e).powi(2) / e).sum();
        // 0.999 quantile of chi-square(2)
        assert!(chi2 < 13.816, "{c:?} chi2 {chi2}");
    }
}

#[test]
fn base_agents_are_independent_of_each_other() {
    let mut cfg = MatchConfig::new(Benchmark::Pd, [AgentKind::Base, AgentKind::Base]);
    cfg.rounds = 2000;
    cfg.seed = 5;
    let h = run_match(&cfg).unwrap().history().unwrap();
    let n = h.len() as f64;
    let same = h.rounds().iter().filter(|j| j.0 == j.1).count() as f64;
    // agreement rate 1/2 with sd 1/(2 sqrt n)
    assert!((same / n - 0.5).abs() < 4.0 * 0.5 / n.sqrt(), "{same}");
    let first_j = h.rounds().iter().filter(|j| j.0 == Action(0)).count() as f64;
    assert!((first_j / n - 0.5).abs() < 4.0 * 0.5 / n.sqrt());
}
