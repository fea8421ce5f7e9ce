use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use repgame::game::{Benchmark, History, Role};
use repgame::planners::gap::{pd_harness, q};
use repgame::planners::{exact_best_response, psbr_decide, PlannerConfig};
use repgame::sim::{run_match, AgentKind, MatchConfig, PayoffMode};
use repgame::strategy::{find, menu, MenuGame};
use repgame::{LabelPosterior, Streams};

fn planners(c: &mut Criterion) {
    let u = Benchmark::Promo.spec().own_payoffs(Role::First);
    let own = menu(MenuGame::Promo, Role::First);
    let post = LabelPosterior::new(menu(MenuGame::Promo, Role::Second), 1.0).unwrap();
    let cfg = PlannerConfig::default();
    c.bench_function("psbr_decide promo h20", |b| {
        b.iter(|| psbr_decide(&u, &own, &History::new(), 1, &post, &cfg, &Streams::new(black_box(1))).unwrap())
    });

    let opp_menu = menu(MenuGame::Promo, Role::Second);
    let mad = find(&opp_menu, "mad1").unwrap();
    c.bench_function("exact_best_response promo mad1", |b| {
        b.iter(|| exact_best_response(&u, black_box(mad), 0.95, 1e-10).unwrap())
    });

    let h = pd_harness();
    let p = vec![q(1, 2), q(1, 3), q(1, 6)];
    c.bench_function("gap harness check", |b| b.iter(|| h.check(black_box(&p))));
}

fn matches(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_match");
    g.sample_size(20);
    for bench in [Benchmark::Pd, Benchmark::Lemons] {
        let mut cfg = MatchConfig::new(bench, [AgentKind::Psbr, AgentKind::Psbr]);
        g.bench_function(format!("{bench} psbr known"), |b| b.iter(|| run_match(black_box(&cfg)).unwrap()));
        cfg.payoff_mode = PayoffMode::GaussianUnknown;
        g.bench_function(format!("{bench} psbr gaussian"), |b| b.iter(|| run_match(black_box(&cfg)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, planners, matches);
criterion_main!(benches);
