use std::cell::RefCell;
use std::rc::Rc;

use repgame::game::{Action, Benchmark, JointAction, Role};
use repgame::rng::Streams;
use repgame::sim::{
    play, run_match, Agent, AgentKind, Decision, MatchConfig, Observation, PayoffMode, PlayerTrace,
};

/// Plays a fixed script and logs what it was shown.
struct Sentinel {
    script: Vec<u8>,
    seen: Rc<RefCell<Vec<(u32, Vec<JointAction>, Vec<f64>)>>>,
    observed: Rc<RefCell<Vec<JointAction>>>,
}

impl Agent for Sentinel {
    fn decide(&mut self, obs: &Observation<'_>, _: &Streams) -> repgame::Result<Decision> {
        self.seen
            .borrow_mut()
            .push((obs.t, obs.history.rounds().to_vec(), obs.rewards.to_vec()));
        Ok(Decision {
            action: Action(self.script[obs.t as usize - 1]),
            trace: PlayerTrace::default(),
        })
    }

    fn observe(&mut self, own_view: JointAction, _: f64) {
        self.observed.borrow_mut().push(own_view);
    }
}

fn sentinel(script: Vec<u8>) -> (Sentinel, Rc<RefCell<Vec<(u32, Vec<JointAction>, Vec<f64>)>>>, Rc<RefCell<Vec<JointAction>>>) {
    let seen = Rc::new(RefCell::new(Vec::new()));
    let observed = Rc::new(RefCell::new(Vec::new()));
    (
        Sentinel {
            script,
            seen: seen.clone(),
            observed: observed.clone(),
        },
        seen,
        observed,
    )
}

#[test]
fn agents_see_only_past_rounds_in_own_view() {
    let a_script = vec![0, 1, 1, 0, 1, 0, 0, 1];
    let b_script = vec![1, 1, 0, 0, 1, 1, 0, 0];
    let (mut a, seen_a, obs_a) = sentinel(a_script.clone());
    let (mut b, seen_b, obs_b) = sentinel(b_script.clone());
    let game = Benchmark::Pd.spec();
    let rounds = play(&game, &mut [&mut a, &mut b], 8, PayoffMode::Known, &Streams::new(3)).unwrap();
    assert_eq!(rounds.len(), 8);

    let truth: Vec<JointAction> = a_script
        .iter()
        .zip(&b_script)
        .map(|(&x, &y)| JointAction::new(x, y))
        .collect();
    for (t, seen) in seen_a.borrow().iter().enumerate() {
        assert_eq!(seen.0 as usize, t + 1);
        assert_eq!(seen.1, truth[..t]);
        let own: Vec<f64> = truth[..t].iter().map(|&j| game.payoff(j).unwrap()[0]).collect();
        assert_eq!(seen.2, own);
    }
    for (t, seen) in seen_b.borrow().iter().enumerate() {
        let swapped: Vec<JointAction> = truth[..t].iter().map(|j| j.swap()).collect();
        assert_eq!(seen.1, swapped);
        let own: Vec<f64> = truth[..t].iter().map(|&j| game.payoff(j).unwrap()[1]).collect();
        assert_eq!(seen.2, own);
    }
    assert_eq!(*obs_a.borrow(), truth);
    assert_eq!(*obs_b.borrow(), truth.iter().map(|j| j.swap()).collect::<Vec<_>>());
    for (r, j) in rounds.iter().zip(&truth) {
        assert_eq!(r.actions, game.joint_names(*j));
        assert_eq!(r.rewards, game.payoff(*j).unwrap());
    }
}

fn allc_noise_residuals(trials: u64) -> Vec<f64> {
    let game = Benchmark::Pd.spec();
    let cc = game.payoff(JointAction::new(0, 0)).unwrap();
    let mut out = Vec::new();
    for seed in 0..trials {
        let mut cfg = MatchConfig::new(
            Benchmark::Pd,
            [AgentKind::Fixed { label: "allc".into() }, AgentKind::Fixed { label: "allc".into() }],
        );
        cfg.payoff_mode = PayoffMode::GaussianUnknown;
        cfg.seed = seed;
        let rec = run_match(&cfg).unwrap();
        for r in &rec.rounds {
            assert_eq!(r.actions, ["J".to_string(), "J".to_string()]);
            out.push(r.rewards[0] - cc[0]);
            out.push(r.rewards[1] - cc[1]);
        }
    }
    out
}

#[test]
fn noise_residuals_have_sigma_squared_variance() {
    // PD noise scale is its smallest payoff gap, 2
    let sigma = 2.0;
    let res = allc_noise_residuals(10);
    let n = res.len() as f64;
    let m = res.iter().sum::<f64>() / n;
    let var = res.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(m.abs() < 4.0 * sigma / n.sqrt(), "mean {m}");
    // sd of the sample variance is about sigma^2 sqrt(2/n)
    assert!((var - sigma * sigma).abs() < 4.0 * sigma * sigma * (2.0 / n).sqrt(), "var {var}");
}

#[test]
fn mean_reward_over_a_match_is_approximately_normal() {
    let sigma = 2.0;
    let trials = 200u64;
    let res = allc_noise_residuals(trials);
    // 400 residuals per trial: 200 rounds, two players; use player 1 only
    let mut inside = 0;
    for k in 0..trials as usize {
        let chunk = &res[k * 400..(k + 1) * 400];
        let mean: f64 = chunk.iter().step_by(2).sum::<f64>() / 200.0;
        let z = mean / (sigma / 200f64.sqrt());
        if z.abs() < 1.959_964 {
            inside += 1;
        }
    }
    let frac = inside as f64 / trials as f64;
    // binomial(200, 0.95) sd is about 0.015
    assert!((0.90..=0.995).contains(&frac), "coverage {frac}");
}

#[test]
fn players_get_independent_noise() {
    let res = allc_noise_residuals(5);
    let (x, y): (Vec<f64>, Vec<f64>) = res.chunks(2).map(|c| (c[0], c[1])).unzip();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let corr = cov / (4.0);
    assert!(corr.abs() < 4.0 / n.sqrt(), "corr {corr}");
}

#[test]
fn same_seed_same_record() {
    for game in Benchmark::ALL {
        let mut cfg = MatchConfig::new(game, [AgentKind::Psbr, AgentKind::Psbr]);
        cfg.rounds = 40;
        cfg.seed = 11;
        cfg.payoff_mode = PayoffMode::GaussianUnknown;
        let a = run_match(&cfg).unwrap().to_jsonl();
        let b = run_match(&cfg).unwrap().to_jsonl();
        assert_eq!(a, b, "{game}");
    }
}

#[test]
fn role_views_are_consistent_in_records() {
    let cfg = MatchConfig::new(Benchmark::Lemons, [AgentKind::Psbr, AgentKind::Scot]);
    let rec = run_match(&cfg).unwrap();
    let h = rec.history().unwrap();
    let second = h.view(Role::Second);
    for (a, b) in h.rounds().iter().zip(second.rounds()) {
        assert_eq!(a.swap(), *b);
    }
}
