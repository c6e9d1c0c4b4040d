//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

// `!(x < y)` reads as intended and also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use entpack_cli::heatmap::{heatmap, Aggregation};
use entpack_cli::presets::RegimePreset;
use entpack_core::actions::{
    approximation_error_bound, build_action_space, exact_batched_probability, sandwich_margins,
    singleclick_probability, ActionSpace,
};
use entpack_core::dp::{policy_evaluation, policy_iteration, EvalOptions, PolicyIterationResult};
use entpack_core::montecarlo::{
    estimate, ActionRule, ConstantRule, SimOptions, TableRule, UniformRule,
};
use entpack_core::policies::{
    analytic_n2, best_constant, constant_policy, random_policy, select_empty_action, HeuristicRule,
    HeuristicSpec,
};
use entpack_core::statespace::{
    count_reduced, count_states, state_count_lower_bound, viable_count, StateSpace,
};
use entpack_core::transitions::TransitionTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

struct Solved {
    actions: ActionSpace,
    space: StateSpace,
    table: TransitionTable,
    opt: PolicyIterationResult,
}

impl Solved {
    fn w_star(&self) -> f64 {
        self.opt.values.empty_state_value()
    }
}

fn solve(regime: &RegimePreset, n: usize, reduced: bool) -> Result<Solved, String> {
    let actions = ok(build_action_space(&ok(regime.params(n))?))?;
    let space = ok(StateSpace::enumerate(n, actions.t_max(), reduced))?;
    let table = ok(TransitionTable::build(&space, &actions))?;
    // the longest-TTL constant policy always completes
    let init = constant_policy(space.len(), actions.len() - 1);
    let opt = ok(policy_iteration(&table, &init, &EvalOptions::default()))?;
    Ok(Solved {
        actions,
        space,
        table,
        opt,
    })
}

fn heuristic(s: &Solved) -> Result<(usize, f64), String> {
    let sel = ok(select_empty_action(
        &s.space,
        &s.table,
        &s.actions,
        &HeuristicSpec::default(),
        &EvalOptions::default(),
    ))?;
    let w = sel.candidates[sel.action]
        .expected_time
        .ok_or("selected empty-state action has no value")?;
    Ok((sel.action, w))
}

/// Simulates `rule` and checks the mean lies within three standard errors
/// of `w`.
fn agrees(
    label: &str,
    rule: &dyn ActionRule,
    n: usize,
    actions: &ActionSpace,
    w: f64,
    episodes: u64,
    seed: u64,
) -> Result<(), String> {
    let r = ok(estimate(
        rule,
        n,
        actions,
        episodes,
        seed,
        &SimOptions::default(),
    ))?;
    ensure!(
        (r.mean - w).abs() <= r.ci3,
        "{label}: simulated {} +- {} vs exact {w}",
        r.mean,
        r.std_error
    );
    Ok(())
}

fn regimes() -> [RegimePreset; 2] {
    [RegimePreset::near_term(), RegimePreset::far_term()]
}

fn criterion_1() -> Check {
    for (preset, gamma, lambda, t_max) in [
        (RegimePreset::near_term(), 0.19, 2.0, 6),
        (RegimePreset::far_term(), 0.1, 1.0, 11),
    ] {
        let name = &preset.name;
        ensure!(
            preset.gamma == gamma && preset.lambda == lambda,
            "{name}: rates differ"
        );
        ensure!(
            preset.t_max() == t_max,
            "{name}: t_max {} != {t_max}",
            preset.t_max()
        );
        // a perfect link decays to f_app after ln(0.75 / 0.25) / gamma steps
        let oracle = ((0.75f64 / (preset.f_app - 0.25)).ln() / gamma).ceil() as u32;
        ensure!(oracle == t_max, "{name}: decay oracle gives {oracle}");
        ok(preset.validate())?;
        let g = preset
            .derived_gamma()
            .ok_or("missing hardware parameters")?;
        let l = preset
            .derived_lambda()
            .ok_or("missing hardware parameters")?;
        ensure!(
            rel(g, gamma) < 1e-12 && rel(l, lambda) < 1e-12,
            "{name}: raw parameters inconsistent"
        );
        let actions = ok(build_action_space(&ok(preset.params(2))?))?;
        ensure!(
            actions.t_max() == t_max,
            "{name}: action space tops out at {}",
            actions.t_max()
        );
    }
    Ok("(0.19, 2, 6) and (0.1, 1, 11)".into())
}

/// Random TTLs strictly increasing, probabilities non-increasing in [0.1, 0.9].
fn synthetic(rng: &mut ChaCha8Rng) -> ActionSpace {
    loop {
        let k = rng.random_range(1..=6usize);
        let mut ttls: Vec<u32> = (1..=10).collect();
        for i in 0..k {
            let j = rng.random_range(i..ttls.len());
            ttls.swap(i, j);
        }
        ttls.truncate(k);
        ttls.sort_unstable();
        if *ttls.last().unwrap() < 2 {
            continue;
        }
        let mut ps: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..=0.9)).collect();
        ps.sort_by(|a, b| b.total_cmp(a));
        let pairs: Vec<(f64, u32)> = ps.into_iter().zip(ttls).collect();
        return ActionSpace::synthetic(&pairs).unwrap();
    }
}

fn criterion_2() -> Check {
    let mut spaces: Vec<(String, ActionSpace)> = regimes()
        .iter()
        .map(|r| Ok((r.name.clone(), ok(build_action_space(&ok(r.params(2))?))?)))
        .collect::<Result<_, String>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..24 {
        spaces.push((format!("synthetic #{i}"), synthetic(&mut rng)));
    }
    let mut worst: f64 = 0.0;
    for (seed, (label, actions)) in spaces.iter().enumerate() {
        let space = ok(StateSpace::full(2, actions.t_max()))?;
        let table = ok(TransitionTable::build(&space, actions))?;
        let a = ok(analytic_n2(&space, actions))?;
        let init = constant_policy(space.len(), actions.len() - 1);
        let opt = ok(policy_iteration(&table, &init, &EvalOptions::default()))?;
        let err = rel(a.expected_time, opt.values.empty_state_value());
        worst = worst.max(err);
        ensure!(
            err < 1e-9,
            "{label}: closed form {} vs {}",
            a.expected_time,
            opt.values.empty_state_value()
        );
        let rule = ok(TableRule::new(&a.policy, &space))?;
        agrees(
            label,
            &rule,
            2,
            actions,
            a.expected_time,
            1_000_000,
            seed as u64,
        )?;
    }
    Ok(format!(
        "{} action spaces, worst relative gap {worst:.1e}",
        spaces.len()
    ))
}

fn criterion_3() -> Check {
    let regime = RegimePreset::near_term();
    let mut worst: f64 = 0.0;
    for n in 2..=5 {
        let s = solve(&regime, n, true)?;
        let (_, w) = heuristic(&s)?;
        let gap = rel(w, s.w_star());
        worst = worst.max(gap);
        ensure!(gap < 1e-9, "n={n}: heuristic {w} vs optimal {}", s.w_star());
    }
    Ok(format!("n=2..5, worst relative gap {worst:.1e}"))
}

fn criterion_4() -> Check {
    let regime = RegimePreset::far_term();
    let mut gaps = Vec::new();
    for n in 2..=7 {
        let s = solve(&regime, n, true)?;
        let (_, w) = heuristic(&s)?;
        let gap = (w - s.w_star()) / s.w_star();
        ensure!(gap > -1e-9 && gap < 0.03, "n={n}: gap {gap}");
        gaps.push(format!("{:.2}%", 100.0 * gap));
    }
    Ok(format!("gaps {}", gaps.join(", ")))
}

fn ratios(regime: &RegimePreset, n: usize) -> Result<(f64, f64), String> {
    let s = solve(regime, n, true)?;
    let opts = EvalOptions::default();
    let con = ok(best_constant(&s.table, &s.actions, &opts))?;
    let ran = ok(policy_evaluation(
        &random_policy(s.space.len(), s.actions.len()),
        &s.table,
        &opts,
    ))?;
    Ok((
        con.values.empty_state_value() / s.w_star(),
        ran.empty_state_value() / s.w_star(),
    ))
}

fn criterion_5() -> Check {
    let within = |x: f64, target: f64| (x - target).abs() <= 0.15 * target;
    let (nc, nr) = ratios(&RegimePreset::near_term(), 5)?;
    let (fc, fr) = ratios(&RegimePreset::far_term(), 7)?;
    let msg = format!(
        "near n=5 con {nc:.2} ran {nr:.2}; far n=7 con {fc:.2} ran {fr:.2}; speed-up {:.3}",
        1.0 / fc
    );
    ensure!(within(nc, 14.0) && within(nr, 56.0), "{msg}");
    ensure!(within(fc, 19.0) && within(fr, 139.0), "{msg}");
    ensure!(within(1.0 / fc, 0.05), "{msg}");
    Ok(msg)
}

fn criterion_6() -> Check {
    let mut found = Vec::new();
    for (regime, n, expected) in [
        (RegimePreset::near_term(), 5, 6),
        (RegimePreset::far_term(), 7, 10),
    ] {
        let s = solve(&regime, n, true)?;
        let cells = ok(heatmap(
            &s.space,
            &s.actions,
            &s.opt.policy,
            Aggregation::Reduced,
        ))?;
        let cell = cells
            .iter()
            .find(|c| c.n_viable == 0)
            .ok_or("no zero-viable cell")?;
        ensure!(
            cell.modal_action_ttl == expected,
            "{} n={n}: empty cell takes TTL {}",
            regime.name,
            cell.modal_action_ttl
        );
        found.push(format!("{} n={n} -> TTL {expected}", regime.name));
    }
    Ok(found.join(", "))
}

/// Pascal's triangle up to row `rows`.
fn pascal(rows: usize) -> Vec<Vec<u128>> {
    let mut c = vec![vec![1u128]];
    for r in 1..=rows {
        let prev = &c[r - 1];
        let mut row = vec![1u128; r + 1];
        for k in 1..r {
            row[k] = prev[k - 1] + prev[k];
        }
        c.push(row);
    }
    c
}

/// Counts canonical multisets with fewer than `n` links, and those made of
/// viable links only, by direct recursion.
fn brute_counts(n: usize, t_max: u8) -> (u128, u128) {
    fn go(n: usize, cap: u8, buf: &mut Vec<u8>, out: &mut (u128, u128)) {
        out.0 += 1;
        if viable_count(buf, n) == buf.len() {
            out.1 += 1;
        }
        if buf.len() + 1 == n {
            return;
        }
        for t in 1..=cap {
            buf.push(t);
            go(n, t, buf, out);
            buf.pop();
        }
    }
    let mut out = (0, 0);
    go(n, t_max, &mut Vec::new(), &mut out);
    out
}

fn criterion_7() -> Check {
    let c = pascal(40);
    let mut cells = 0;
    for t_max in 2..=11u32 {
        for n in 2..=t_max as usize {
            let t = t_max as usize;
            let full = c[t + n - 1][n - 1];
            let mut reduced = 1;
            for m in 1..n {
                // m viable links take values in (n - m, t_max]
                let vals = t + m - n;
                reduced += c[vals + m - 1][m];
            }
            let hockey: u128 = (0..n).map(|m| c[t - 1 + m][m]).sum();
            ensure!(hockey == full, "hockey-stick fails at n={n}, t_max={t_max}");
            ensure!(
                ok(count_states(n, t_max))? == full,
                "count_states n={n} t_max={t_max}"
            );
            ensure!(
                ok(count_reduced(n, t_max))? == reduced,
                "count_reduced n={n} t_max={t_max}"
            );
            let f = ok(StateSpace::full(n, t_max))?.len() as u128;
            let r = ok(StateSpace::reduced(n, t_max))?.len() as u128;
            ensure!(
                (f, r) == (full, reduced),
                "enumeration ({f}, {r}) at n={n}, t_max={t_max}"
            );
            ensure!(
                brute_counts(n, t_max as u8) == (full, reduced),
                "recursion disagrees at n={n}, t_max={t_max}"
            );
            let lb = ok(state_count_lower_bound(n, t_max))?;
            ensure!(lb <= full as f64, "lower bound {lb} > {full}");
            ensure!(full >= 1u128 << (n - 1), "count below 2^(n-1) at n={n}");
            cells += 1;
        }
    }
    Ok(format!("{cells} (n, t_max) pairs"))
}

fn criterion_8() -> Check {
    let mut worst: f64 = 0.0;
    for regime in regimes() {
        for m in [500u64, 1000] {
            for i in 0..1000 {
                let f = regime.f_app + (1.0 - regime.f_app) * (i as f64 + 0.5) / 1000.0;
                let exact = ok(exact_batched_probability(f, regime.lambda, m))?;
                let approx = singleclick_probability(f, regime.lambda);
                let bound = ok(approximation_error_bound(f, regime.lambda, m))?;
                let d = exact - approx;
                ensure!(
                    d >= 0.0 && d <= bound,
                    "M={m}, F={f}: gap {d}, bound {bound}"
                );
                worst = worst.max(d / bound);
            }
        }
    }
    let mut points = 0;
    for i in 1..=1200 {
        let y = 1.0 + 10f64.powf(-6.0 + 12.0 * i as f64 / 1200.0);
        let (lo, hi) = ok(sandwich_margins(y))?;
        ensure!(
            lo > 0.0 && hi > 0.0,
            "sandwich fails at y={y}: ({lo}, {hi})"
        );
        points += 1;
    }
    Ok(format!(
        "gap/bound <= {worst:.3}; sandwich holds at {points} points in (1, 1e6]"
    ))
}

fn episodes_for(w: f64) -> u64 {
    (2e8 / w).clamp(1000.0, 1e6) as u64
}

fn criterion_9() -> Check {
    let opts = EvalOptions::default();
    let mut checked = 0;
    let mut rounds = 0;
    for regime in regimes() {
        for n in 2..=5 {
            let tag = format!("{} n={n}", regime.name);
            let full = solve(&regime, n, false)?;
            let reduced = solve(&regime, n, true)?;
            ensure!(
                rel(full.w_star(), reduced.w_star()) < 1e-9,
                "{tag}: full {} vs reduced {}",
                full.w_star(),
                reduced.w_star()
            );
            for s in [&full, &reduced] {
                let mut prev = f64::INFINITY;
                for r in &s.opt.rounds {
                    ensure!(
                        r.w_empty <= prev * (1.0 + 1e-12),
                        "{tag}: w(∅) rose between rounds"
                    );
                    ensure!(
                        r.max_increase <= 1e-9,
                        "{tag}: a state value rose by {}",
                        r.max_increase
                    );
                    prev = r.w_empty;
                    rounds += 1;
                }
            }
            let seed = 100 * n as u64;
            let (a, w) = heuristic(&full)?;
            let rule = ok(HeuristicRule::new(n, &full.actions, a))?;
            agrees(
                &format!("{tag} heuristic"),
                &rule,
                n,
                &full.actions,
                w,
                episodes_for(w),
                seed,
            )?;

            let w = full.w_star();
            let rule = ok(TableRule::new(&full.opt.policy, &full.space))?;
            agrees(
                &format!("{tag} optimal"),
                &rule,
                n,
                &full.actions,
                w,
                episodes_for(w),
                seed + 1,
            )?;

            let con = ok(best_constant(&full.table, &full.actions, &opts))?;
            let w = con.values.empty_state_value();
            agrees(
                &format!("{tag} constant"),
                &ConstantRule(con.action),
                n,
                &full.actions,
                w,
                episodes_for(w),
                seed + 2,
            )?;

            let k = full.actions.len();
            let w = ok(policy_evaluation(
                &random_policy(full.space.len(), k),
                &full.table,
                &opts,
            ))?
            .empty_state_value();
            agrees(
                &format!("{tag} random"),
                &UniformRule(k),
                n,
                &full.actions,
                w,
                episodes_for(w),
                seed + 3,
            )?;
            checked += 4;
        }
    }
    Ok(format!(
        "{checked} policy/instance pairs, {rounds} improvement rounds"
    ))
}

fn criterion_10() -> Check {
    let s = solve_space_only(&RegimePreset::far_term(), 11)?;
    let (a, w_h) = heuristic(&s)?;
    let con = ok(best_constant(&s.table, &s.actions, &EvalOptions::default()))?;
    let ratio = w_h / con.values.empty_state_value();
    let msg = format!(
        "heuristic {w_h:.4e} (empty TTL {}), best constant {:.4e}, ratio {ratio:.3e}",
        s.actions.get(a).ttl,
        con.values.empty_state_value()
    );
    ensure!((1.05e-7..=1.05e-5).contains(&ratio), "{msg}");
    Ok(msg)
}

/// Like [`solve`] but without policy iteration, which is not needed at n=11.
fn solve_space_only(regime: &RegimePreset, n: usize) -> Result<Solved, String> {
    let actions = ok(build_action_space(&ok(regime.params(n))?))?;
    let space = ok(StateSpace::reduced(n, actions.t_max()))?;
    let table = ok(TransitionTable::build(&space, &actions))?;
    let init = constant_policy(space.len(), actions.len() - 1);
    let values = ok(policy_evaluation(&init, &table, &EvalOptions::default()))?;
    Ok(Solved {
        actions,
        space,
        table,
        opt: PolicyIterationResult {
            policy: init,
            values,
            iterations: 0,
            rounds: Vec::new(),
        },
    })
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("preset integrity", criterion_1),
        ("n=2 closed form", criterion_2),
        ("heuristic optimal, near-term", criterion_3),
        ("heuristic within 3%, far-term", criterion_4),
        ("baseline ratios", criterion_5),
        ("heat-map empty-state anchors", criterion_6),
        ("state counting", criterion_7),
        ("trade-off bound and sandwich", criterion_8),
        ("oracle equivalence", criterion_9),
        ("far-term n=11 ratio", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
