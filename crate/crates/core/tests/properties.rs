mod common;

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use linbandit::density::{connect_classes, linearize, normalize_density, PiecewiseDensity};
use linbandit::harness::{replay_evaluate, EventRecord};
use linbandit::policy::{
    linearized_select_batch, seeded_rng, EgState, PolicyConfig, PolicyKind, PolicyState,
};
use linbandit::reward::{build_point_series, DocId, PointSeries, RewardLabel, RewardSample, StatsStore};
use linbandit::situation::{Ontology, Situation, SituationSpace, SituationStore};
use linbandit::utility::{
    exploration_rate, optimize_threshold, utility_value, PopulationCounts, UtilityParams,
    UtilityVariant,
};

fn random_density(seed: u64) -> PiecewiseDensity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = common::random_classes(&mut rng);
    let liaisons = connect_classes(&classes).unwrap();
    normalize_density(classes, liaisons).unwrap()
}

fn fitted_density(rewards: &[f64]) -> Option<PiecewiseDensity> {
    let sample = RewardSample::from_rewards(RewardLabel::Clicked, rewards.iter().copied()).unwrap();
    PiecewiseDensity::fit(&build_point_series(&sample).unwrap(), 1e-4).ok()
}

fn docs(n: usize) -> Vec<DocId> {
    (0..n).map(|i| DocId::new(format!("d{i}"))).collect()
}

/// Fuzzed rounds: a random candidate subset of twelve documents and a click.
fn fuzz_rounds(seed: u64, rounds: usize) -> Vec<(Vec<DocId>, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = docs(12);
    (0..rounds)
        .map(|_| {
            let k = rng.gen_range(1..=6);
            let cands = rand::seq::index::sample(&mut rng, pool.len(), k)
                .iter()
                .map(|i| pool[i].clone())
                .collect();
            (cands, rng.gen_bool(0.3))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linearize_recovers_noiseless_pieces(seed in any::<u64>(), pieces in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (points, slopes) = common::piecewise_series(&mut rng, pieces);
        let classes = linearize(&PointSeries::from_points(points).unwrap(), 1e-4).unwrap();
        prop_assert_eq!(classes.len(), slopes.len());
        for (c, s) in classes.iter().zip(&slopes) {
            prop_assert!((c.line.slope - s).abs() < 1e-6, "{} vs {}", c.line.slope, s);
        }
    }

    #[test]
    fn classes_tile_the_point_range(
        raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..60),
        threshold in prop_oneof![Just(0.0), Just(1e-4), Just(1e-2), Just(1.0)],
    ) {
        let mut raw = raw;
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        raw.dedup_by(|a, b| a.0 == b.0);
        let series = PointSeries::from_points(raw.clone()).unwrap();
        let classes = linearize(&series, threshold).unwrap();
        prop_assert_eq!(classes[0].lower, raw[0].0);
        prop_assert_eq!(classes[classes.len() - 1].upper, raw[raw.len() - 1].0);
        for w in classes.windows(2) {
            prop_assert!(w[0].upper < w[1].lower);
        }
    }

    #[test]
    fn fitted_density_is_continuous_and_nonnegative(
        rewards in prop::collection::vec(0.0f64..=1.0, 2..300),
    ) {
        let Some(d) = fitted_density(&rewards) else { return Ok(()) };
        let (lo, hi) = d.domain();
        for (c, l) in d.classes().windows(2).zip(d.liaisons()) {
            prop_assert!((l.line.at(l.lower) - c[0].line.at(c[0].upper)).abs() < 1e-9);
            prop_assert!((l.line.at(l.upper) - c[1].line.at(c[1].lower)).abs() < 1e-9);
        }
        let mut prev = f64::INFINITY;
        for o in common::grid(lo - 0.05, hi + 0.05, 500) {
            prop_assert!(d.evaluate(o) >= 0.0);
            let t = d.tail_probability(o);
            prop_assert!(t <= prev + 1e-12, "tail rises at {}: {} > {}", o, t, prev);
            prev = t;
        }
        prop_assert!((d.tail_probability(lo) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tail_matches_trapezoid(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = common::random_classes(&mut rng);
        let d = normalize_density(classes.clone(), connect_classes(&classes).unwrap()).unwrap();
        prop_assert!((d.area() - 1.0).abs() < 1e-9);
        let (xs, tails) = common::trapezoid_tails(&classes, 100_000);
        for i in (0..xs.len()).step_by(997) {
            prop_assert!((d.tail_probability(xs[i]) - tails[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn optimizer_dominates_grid(
        sc in any::<u64>(),
        sn in any::<u64>(),
        nc in 1u64..1000,
        nn in 1u64..1000,
        a in 0.1f64..5.0,
        b in 0.1f64..5.0,
        mixture in any::<bool>(),
    ) {
        let (dc, dn) = (random_density(sc), random_density(sn));
        let variant = if mixture { UtilityVariant::Mixture } else { UtilityVariant::Difference };
        let params = UtilityParams::new(a, b, variant).unwrap();
        let counts = PopulationCounts::new(nc, nn);
        let best = optimize_threshold(Some(&dc), Some(&dn), &params, &counts, 1024).unwrap();
        let lo = dc.domain().0.min(dn.domain().0) - 0.1;
        let hi = dc.domain().1.max(dn.domain().1) + 0.1;
        let scale = best.utility.abs().max(1.0);
        for o in common::grid(lo, hi, 10_000) {
            let uf = utility_value(o, &dc, &dn, &params, &counts).unwrap();
            prop_assert!(best.utility >= uf - 1e-9 * scale, "UF({}) = {} > {}", o, uf, best.utility);
        }
        prop_assert_eq!(best.epsilon, exploration_rate(best.threshold, &dc));
    }

    #[test]
    fn epsilon_is_non_increasing_in_threshold(seed in any::<u64>()) {
        let d = random_density(seed);
        let (lo, hi) = d.domain();
        let mut prev = f64::INFINITY;
        for o in common::grid(lo - 0.1, hi + 0.1, 2000) {
            let e = exploration_rate(o, &d);
            prop_assert!(e <= prev + 1e-12);
            prop_assert!((0.0..=1.0).contains(&e));
            prev = e;
        }
    }

    #[test]
    fn difference_argmax_is_scale_invariant(
        sc in any::<u64>(),
        sn in any::<u64>(),
        a in 0.1f64..5.0,
        b in 0.1f64..5.0,
        lambda in 0.01f64..100.0,
    ) {
        let (dc, dn) = (random_density(sc), random_density(sn));
        let counts = PopulationCounts::new(10, 10);
        let base = UtilityParams::new(a, b, UtilityVariant::Difference).unwrap();
        let scaled = UtilityParams::new(lambda * a, lambda * b, UtilityVariant::Difference).unwrap();
        let r1 = optimize_threshold(Some(&dc), Some(&dn), &base, &counts, 1024).unwrap();
        let r2 = optimize_threshold(Some(&dc), Some(&dn), &scaled, &counts, 1024).unwrap();
        // Interior maxima are bisected roots of `-a·f_r + b·f_s`, and `λa`, `λb`
        // round independently, so those may move by an ulp.
        prop_assert!((r1.threshold - r2.threshold).abs() <= 1e-9, "{} vs {}", r1.threshold, r2.threshold);
        prop_assert!((r2.utility - lambda * r1.utility).abs() <= 1e-9 * r2.utility.abs().max(1.0));
    }

    #[test]
    fn eg_probabilities_stay_floored(
        rewards in prop::collection::vec((0usize..5, any::<bool>()), 0..500),
        floor in 0.0f64..0.5,
    ) {
        let mut eg = EgState::new(&[0.01, 0.05, 0.1, 0.2, 0.5], 0.1, floor).unwrap();
        for (i, clicked) in rewards {
            eg.update(i, if clicked { 1.0 } else { 0.0 });
            let p = eg.probabilities();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x >= floor / 5.0 - 1e-15));
        }
    }

    #[test]
    fn decisions_stay_within_candidates(seed in any::<u64>(), kind_idx in 0usize..5) {
        let mut cfg = PolicyConfig::new(PolicyKind::ALL[kind_idx]);
        cfg.batch = 25;
        let mut policy = PolicyState::new(cfg, seed).unwrap();
        for (cands, clicked) in fuzz_rounds(seed, 300) {
            let d = policy.refresh_and_select(&cands).unwrap();
            prop_assert!(cands.contains(&d.doc));
            prop_assert!((0.0..=1.0).contains(&d.epsilon_used));
            policy.observe(&d.doc, clicked);
        }
    }

    #[test]
    fn batch_has_no_duplicates(seed in any::<u64>(), n_docs in 1usize..15, take in 0usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cands = docs(n_docs);
        let mut store = StatsStore::default();
        for _ in 0..200 {
            store.record_event(&cands[rng.gen_range(0..n_docs)], rng.gen_bool(0.4));
        }
        let cfg = PolicyConfig::default();
        let res = linearized_select_batch(take, store.clicked(), store.non_clicked(), &cands, &store, &cfg, &mut rng);
        if take > n_docs {
            prop_assert!(res.is_err());
        } else {
            let (d, _) = res.unwrap();
            prop_assert_eq!(d.len(), take);
            prop_assert_eq!(d.iter().collect::<HashSet<_>>().len(), take);
            prop_assert!(d.iter().all(|x| cands.contains(x)));
        }
    }

    #[test]
    fn wu_palmer_on_random_trees(seed in any::<u64>(), size in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parents: Vec<Option<usize>> = (0..size)
            .map(|i| if i == 0 { None } else { Some(rng.gen_range(0..i)) })
            .collect();
        let name = |i: usize| format!("n{i}");
        let o = Ontology::from_edges((0..size).map(|i| (name(i), parents[i].map(name)))).unwrap();

        // Reference: explicit root paths.
        let path = |mut i: usize| {
            let mut p = vec![i];
            while let Some(q) = parents[i] {
                p.push(q);
                i = q;
            }
            p.reverse();
            p
        };
        for x in 0..size {
            let px = path(x);
            prop_assert_eq!(o.depth(&name(x)).unwrap() as usize, px.len());
            if let Some(p) = parents[x] {
                prop_assert_eq!(o.depth(&name(x)).unwrap(), o.depth(&name(p)).unwrap() + 1);
            }
            for y in 0..size {
                let py = path(y);
                let shared = px.iter().zip(&py).take_while(|(a, b)| a == b).count();
                let want = 2.0 * shared as f64 / (px.len() + py.len()) as f64;
                let got = o.wu_palmer(&name(x), &name(y)).unwrap();
                prop_assert!((got - want).abs() < 1e-15);
                prop_assert_eq!(got, o.wu_palmer(&name(y), &name(x)).unwrap());
                prop_assert!(got > 0.0 && got <= 1.0);
                prop_assert_eq!(got == 1.0, x == y);
            }
        }
    }

    #[test]
    fn retrieval_matches_brute_force(seed in any::<u64>(), stored in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = SituationSpace::new(
            Ontology::balanced("loc", 3, 2),
            Ontology::balanced("time", 2, 3),
            Ontology::balanced("soc", 2, 2),
        );
        let pick = |o: &Ontology, rng: &mut ChaCha8Rng| {
            o.concepts().nth(rng.gen_range(0..o.len())).unwrap().to_string()
        };
        let draw = |rng: &mut ChaCha8Rng| {
            Situation::new(pick(space.location(), rng), pick(space.time(), rng), pick(space.social(), rng))
        };
        let entries: Vec<Situation> = (0..stored).map(|_| draw(&mut rng)).collect();
        let current = draw(&mut rng);
        let mut store = SituationStore::new(space.clone());
        for (i, s) in entries.iter().enumerate() {
            store.insert(s.clone(), i).unwrap();
        }
        let score = |s: &Situation| {
            space.location().wu_palmer(&s.location, &current.location).unwrap()
                + space.time().wu_palmer(&s.time, &current.time).unwrap()
                + space.social().wu_palmer(&s.social, &current.social).unwrap()
        };
        let brute = entries.iter().map(score).fold(f64::NEG_INFINITY, f64::max);
        let (_, got) = linbandit::situation::retrieve_situation(&store, &current).unwrap().unwrap();
        prop_assert!((got - brute).abs() < 1e-12);
    }

    #[test]
    fn replay_ctr_matches_recount(seed in any::<u64>(), kind_idx in 0usize..5) {
        let rounds = fuzz_rounds(seed, 400);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let log: Vec<EventRecord> = rounds
            .into_iter()
            .enumerate()
            .map(|(t, (candidates, clicked))| EventRecord {
                t: t as u64 + 1,
                situation: Situation::new("l", "t", "s"),
                displayed: candidates[rng.gen_range(0..candidates.len())].clone(),
                candidates,
                clicked,
            })
            .collect();
        let mut policy = PolicyState::new(PolicyConfig::new(PolicyKind::ALL[kind_idx]), seed).unwrap();
        let report = replay_evaluate(&mut policy, log.iter().cloned().map(Ok)).unwrap();
        let (mut evaluated, mut clicks) = (0u64, 0u64);
        for (row, rec) in report.rows.iter().zip(&log) {
            if row.evaluated {
                evaluated += 1;
                clicks += rec.clicked as u64;
            }
            let want = (evaluated > 0).then(|| clicks as f64 / evaluated as f64);
            prop_assert_eq!(row.cumulative_ctr, want);
        }
        prop_assert_eq!(report.evaluated_rounds, evaluated);
        prop_assert_eq!(report.no_overlap, evaluated == 0);
    }
}

#[test]
fn forced_greedy_linearized_equals_zero_epsilon_greedy() {
    for seed in 0..20 {
        let mut lin_cfg = PolicyConfig::new(PolicyKind::Linearized);
        lin_cfg.epsilon_override = Some(1.0);
        let mut eg_cfg = PolicyConfig::new(PolicyKind::Egreedy);
        eg_cfg.epsilon = 0.0;
        let mut lin = PolicyState::new(lin_cfg, seed).unwrap();
        let mut greedy = PolicyState::new(eg_cfg, seed).unwrap();
        let mut counts: HashMap<DocId, (u64, u64)> = HashMap::new();
        for (t, (cands, clicked)) in fuzz_rounds(seed, 1000).into_iter().enumerate() {
            let a = lin.refresh_and_select(&cands).unwrap();
            let b = greedy.refresh_and_select(&cands).unwrap();
            assert_eq!(a.doc, b.doc, "seed {seed}, round {}", t + 1);
            assert!(!a.exploratory && !b.exploratory);

            let ctr = |d: &DocId| counts.get(d).map_or(0.0, |&(n, c)| c as f64 / n as f64);
            let top = cands.iter().map(ctr).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(ctr(&a.doc), top);

            lin.observe(&a.doc, clicked);
            greedy.observe(&b.doc, clicked);
            let e = counts.entry(a.doc.clone()).or_default();
            e.0 += 1;
            e.1 += clicked as u64;
        }
    }
}

#[test]
fn full_exploration_ignores_ctrs() {
    let mut cfg = PolicyConfig::new(PolicyKind::Egreedy);
    cfg.epsilon = 1.0;
    let mut a = PolicyState::new(cfg.clone(), 4).unwrap();
    let mut b = PolicyState::new(cfg, 4).unwrap();
    for (cands, clicked) in fuzz_rounds(4, 1000) {
        let da = a.refresh_and_select(&cands).unwrap();
        let db = b.refresh_and_select(&cands).unwrap();
        assert_eq!(da.doc, db.doc);
        a.observe(&da.doc, clicked);
        b.observe(&db.doc, !clicked);
    }
}

#[test]
fn uniform_exploration_frequencies() {
    let cands = docs(4);
    let store = StatsStore::default();
    let mut rng = seeded_rng(17);
    let mut hits = [0u32; 4];
    for _ in 0..100_000 {
        let d = linbandit::policy::epsilon_greedy_select(&cands, &store, 1.0, &mut rng).unwrap();
        hits[cands.iter().position(|c| *c == d.doc).unwrap()] += 1;
    }
    for h in hits {
        let f = h as f64 / 100_000.0;
        assert!((f - 0.25).abs() < 0.01, "frequency {f}");
    }
}

#[test]
fn forced_greedy_batch_is_top_ctr_in_order() {
    let cands = docs(6);
    let mut store = StatsStore::default();
    for (i, d) in cands.iter().enumerate() {
        for k in 0..10 {
            store.record_event(d, k < i);
        }
    }
    let cfg = PolicyConfig {
        epsilon_override: Some(1.0),
        ..PolicyConfig::default()
    };
    let (d, est) = linearized_select_batch(3, store.clicked(), store.non_clicked(), &cands, &store, &cfg, &mut seeded_rng(0)).unwrap();
    assert_eq!(est.epsilon, 1.0);
    assert_eq!(d, vec![cands[5].clone(), cands[4].clone(), cands[3].clone()]);
}

#[test]
fn mixture_matches_term_by_term_integration() {
    let uniform = |lo: f64, hi: f64| {
        vec![linbandit::density::LinearClass {
            lower: lo,
            upper: hi,
            line: linbandit::density::Line::new(1.0, 0.0),
        }]
    };
    let params = UtilityParams::new(1.0, 1.0, UtilityVariant::Mixture).unwrap();
    let counts = PopulationCounts::new(50, 50);
    let cases = [
        (uniform(0.5, 1.0), uniform(0.0, 0.5)),
        {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            (common::random_classes(&mut rng), common::random_classes(&mut rng))
        },
    ];
    for (cc, nc) in cases {
        let dc = normalize_density(cc.clone(), connect_classes(&cc).unwrap()).unwrap();
        let dn = normalize_density(nc.clone(), connect_classes(&nc).unwrap()).unwrap();
        let (xc, tc) = common::trapezoid_tails(&cc, 100_000);
        let (xn, tn) = common::trapezoid_tails(&nc, 100_000);
        let tail = |xs: &[f64], ts: &[f64], o: f64| {
            if o <= xs[0] {
                1.0
            } else if o >= xs[xs.len() - 1] {
                0.0
            } else {
                let i = xs.partition_point(|&x| x <= o) - 1;
                let w = (o - xs[i]) / (xs[i + 1] - xs[i]);
                ts[i] + w * (ts[i + 1] - ts[i])
            }
        };
        for o in [0.5, 0.0, 0.25, 0.8, 1.3] {
            let (t_r, t_s) = (tail(&xc, &tc, o), tail(&xn, &tn, o));
            let mix = 0.5 * t_r + 0.5 * t_s;
            let want = mix * 100.0 * (t_r + t_s);
            let got = utility_value(o, &dc, &dn, &params, &counts).unwrap();
            assert!((got - want).abs() < 1e-4, "o = {o}: {got} vs {want}");
        }
    }
    let dc = normalize_density(uniform(0.5, 1.0), vec![]).unwrap();
    let dn = normalize_density(uniform(0.0, 0.5), vec![]).unwrap();
    assert_eq!(utility_value(0.5, &dc, &dn, &params, &counts).unwrap(), 50.0);
}

