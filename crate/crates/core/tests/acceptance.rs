//! Acceptance gate. Runs without the libtest harness so that every criterion
//! prints exactly one PASS/FAIL line, whatever the capture settings.

use std::time::{Duration, Instant};

use hybrid_screen::bayes::{posterior_update, prob_accuracy_above, BetaParams, FilterPosterior};
use hybrid_screen::ensemble::{pearson, screen_classifiers, ScreeningRule};
use hybrid_screen::experiment::{sweep, write_aggregate, Strategy, SweepResult, SweepSpec};
use hybrid_screen::model::{
    ClassifierId, ClassifierProfile, FilterId, FilterLabel, GoldRecord, GoldSet, ItemId,
    SourceKind, Vote,
};
use hybrid_screen::sim::seeds::stream;
use hybrid_screen::sim::{
    copula_outputs, generate_items, normal_cdf, normal_pdf, normal_quantile, FilterSpec,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- criterion 1

fn brute_force(prior: f64, votes: &[(FilterLabel, f64, f64)]) -> f64 {
    let mut like_applies = prior;
    let mut like_not = 1.0 - prior;
    for &(v, sens, spec) in votes {
        match v {
            FilterLabel::Applies => {
                like_applies *= sens;
                like_not *= 1.0 - spec;
            }
            FilterLabel::NotApplies => {
                like_applies *= 1.0 - sens;
                like_not *= spec;
            }
        }
    }
    like_applies / (like_applies + like_not)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let priors = [0.1, 0.3, 0.5, 0.7, 0.9];
    let accs = [0.55, 0.75, 0.95];
    let mut steps = Vec::new();
    for v in [FilterLabel::Applies, FilterLabel::NotApplies] {
        for &s in &accs {
            for &sp in &accs {
                steps.push((v, s, sp));
            }
        }
    }
    let mut sequences: Vec<Vec<(FilterLabel, f64, f64)>> = vec![Vec::new()];
    let mut frontier = sequences.clone();
    for _ in 0..3 {
        let next: Vec<_> = frontier
            .iter()
            .flat_map(|seq| {
                steps.iter().map(move |&st| {
                    let mut s = seq.clone();
                    s.push(st);
                    s
                })
            })
            .collect();
        sequences.extend(next.iter().cloned());
        frontier = next;
    }
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for &p in &priors {
        for seq in &sequences {
            let sequential = seq
                .iter()
                .fold(FilterPosterior::new(p).unwrap(), |acc, &(v, s, sp)| {
                    posterior_update(acc, v, s, sp)
                });
            worst = worst.max((sequential.prob_applies() - brute_force(p, seq)).abs());
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("{checked} sequences, max |error| {worst:.2e}, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------- criterion 2

fn binomial_upper_tail(correct: usize, t: usize) -> f64 {
    // P(a > 1/2) for Beta(1 + c, 1 + t - c) equals P(Bin(t + 1, 1/2) <= c).
    let n = t + 1;
    let mut coeff = 1.0f64;
    let mut total = 0.0;
    for j in 0..=correct {
        if j > 0 {
            coeff = coeff * (n - j + 1) as f64 / j as f64;
        }
        total += coeff;
    }
    total / 2f64.powi(n as i32)
}

fn screening_keeps(correct: usize) -> bool {
    let f = FilterId(0);
    let mut gold = GoldSet::new([f]);
    for i in 0..20 {
        gold.insert(GoldRecord::new(
            ItemId(i),
            [(f, FilterLabel::from_applies(i % 3 == 0))],
        ))
        .unwrap();
    }
    let id = ClassifierId::new("m");
    let votes: Vec<Vote> = gold
        .item_ids()
        .into_iter()
        .enumerate()
        .map(|(k, item)| {
            let truth = gold.label(item, f).unwrap();
            Vote {
                classifier_id: id.clone(),
                item_id: item,
                filter_id: f,
                value: if k < correct { truth } else { truth.flipped() },
                source_kind: SourceKind::Machine,
            }
        })
        .collect();
    let profiles = [ClassifierProfile::machine(id.clone(), gold.filters())];
    let s = screen_classifiers(&profiles, &votes, &gold, &ScreeningRule::default()).unwrap();
    s.kept[&f].contains(&id)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let t = 20;
    let mut worst: f64 = 0.0;
    let mut decisions = Vec::new();
    let mut agree = true;
    for c in 0..=t {
        let p = prob_accuracy_above(BetaParams::from_counts(c, t - c), 0.5).unwrap();
        worst = worst.max((p - binomial_upper_tail(c, t)).abs());
        let keep = p >= 0.95;
        agree &= keep == screening_keeps(c);
        decisions.push(keep);
    }
    let flips = decisions.windows(2).filter(|w| w[0] != w[1]).count();
    let first_kept = decisions.iter().position(|&k| k);
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && flips == 1 && agree && elapsed < Duration::from_secs(1),
        format!(
            "max |error| {worst:.2e}, decision flips {flips} (first kept score {first_kept:?}), screening agrees {agree}, {elapsed:.2?}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

/// Bivariate normal orthant probability P(Z1 <= q, Z2 <= q) for the one-factor
/// model with loading sqrt(rho), integrated over the common factor.
fn orthant(q: f64, rho: f64) -> f64 {
    if rho == 0.0 {
        return normal_cdf(q).powi(2);
    }
    let (a, b, n) = (-9.0, 9.0, 4000);
    let h = (b - a) / n as f64;
    let f = |z: f64| {
        let c = normal_cdf((q - rho.sqrt() * z) / (1.0 - rho).sqrt());
        normal_pdf(z) * c * c
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn oracle_output_correlation(acc: f64, rho: f64, selectivity: f64) -> f64 {
    let both_correct = orthant(normal_quantile(acc).unwrap(), rho);
    let both_wrong = 1.0 - 2.0 * acc + both_correct;
    let m = selectivity * acc + (1.0 - selectivity) * (1.0 - acc);
    let joint = selectivity * both_correct + (1.0 - selectivity) * both_wrong;
    (joint - m * m) / (m * (1.0 - m))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let n = 20_000;
    let filters = [FilterSpec {
        filter_id: FilterId(0),
        selectivity: 0.3,
    }];
    let gold = generate_items(0, n, &filters, &mut stream(31, "gold", 0)).unwrap();
    let items = gold.item_ids();
    let truth: Vec<bool> = items
        .iter()
        .map(|&i| gold.label(i, FilterId(0)).unwrap().applies())
        .collect();
    let sel = truth.iter().filter(|&&t| t).count() as f64 / n as f64;
    let k = 4;
    let accs = vec![vec![0.75]; k];
    let mut pass = true;
    let mut means = Vec::new();
    let mut notes = Vec::new();
    for (r, &rho) in [0.0, 0.3, 0.7].iter().enumerate() {
        let m = copula_outputs(&accs, rho, &gold, &mut stream(31, "copula", r as u64)).unwrap();
        let outs: Vec<Vec<bool>> = (0..k).map(|c| m.outputs(0, c, &items).unwrap()).collect();
        let mut worst_marg: f64 = 0.0;
        for o in &outs {
            let acc = o.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / n as f64;
            worst_marg = worst_marg.max((acc - 0.75).abs());
        }
        let oracle = oracle_output_correlation(0.75, rho, sel);
        let mut worst_corr: f64 = 0.0;
        let mut sum = 0.0;
        let mut pairs = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                let c = pearson(&outs[i], &outs[j]).unwrap();
                worst_corr = worst_corr.max((c - oracle).abs());
                sum += c;
                pairs += 1.0;
            }
        }
        means.push(sum / pairs);
        pass &= worst_marg <= 0.02 && worst_corr <= 0.05;
        notes.push(format!(
            "rho {rho}: marginal dev {worst_marg:.4}, corr {:.4} vs oracle {oracle:.4}",
            sum / pairs
        ));
    }
    let monotone = means.windows(2).all(|w| w[1] > w[0]);
    let elapsed = start.elapsed();
    outcome(
        pass && monotone && elapsed < Duration::from_secs(10),
        format!("{}; monotone {monotone}; {elapsed:.2?}", notes.join("; ")),
    )
}

// ---------------------------------------------------------------- criteria 4-7

fn price(result: &SweepResult, rho: f64, s: Strategy) -> (f64, f64) {
    let row = result.row(rho, s).unwrap();
    (row.mean_price_per_item, row.price_sem())
}

fn criterion_4(spec: &SweepSpec, result: &SweepResult, elapsed: Duration) -> Outcome {
    let mut notes = Vec::new();
    let mut a = true;
    for s in &result.savings {
        let ok =
            s.hybrid_price_per_item < s.crowd_price_per_item && (0.05..=0.60).contains(&s.savings);
        a &= ok;
        notes.push(format!("{}:{:.1}%", s.correlation, 100.0 * s.savings));
    }
    let hybrid: Vec<(f64, f64)> = spec
        .correlations
        .iter()
        .map(|&r| price(result, r, Strategy::Hybrid))
        .collect();
    let mut inversions = 0;
    let mut b = true;
    for w in hybrid.windows(2) {
        let ((p0, se0), (p1, se1)) = (w[0], w[1]);
        if p1 < p0 {
            inversions += 1;
            b &= p0 - p1 <= se0.max(se1);
        }
    }
    b &= inversions <= 1;
    let first = *spec.correlations.first().unwrap();
    let last = *spec.correlations.last().unwrap();
    let loss = |r| result.row(r, Strategy::Machine).unwrap().mean_loss_per_item;
    let c = loss(last) > loss(first);
    let fast = elapsed < Duration::from_secs(300);
    outcome(
        a && b && c && fast,
        format!(
            "(a) savings {} {}; (b) hybrid price {:?}, inversions {inversions} {}; (c) machine loss {:.4} at {last} vs {:.4} at {first} {}; {elapsed:.1?}",
            notes.join(" "),
            if a { "ok" } else { "FAIL" },
            hybrid.iter().map(|p| (p.0 * 100.0).round() / 100.0).collect::<Vec<_>>(),
            if b { "ok" } else { "FAIL" },
            loss(last),
            loss(first),
            if c { "ok" } else { "FAIL" },
        ),
    )
}

fn criterion_5(result: &SweepResult) -> Outcome {
    let mut worst: f64 = 0.0;
    for row in &result.aggregate {
        if row.strategy != Strategy::Machine {
            worst = worst.max(row.mean_fe_rate);
        }
    }
    let runs_worst = result
        .runs
        .iter()
        .filter(|r| r.strategy != Strategy::Machine)
        .map(|r| r.fe_rate)
        .fold(0.0, f64::max);
    outcome(
        worst <= 0.03,
        format!("max mean FE rate {worst:.4} (worst single run {runs_worst:.4})"),
    )
}

fn criterion_6(baseline: &SweepResult, spec: &SweepSpec) -> Outcome {
    let mut degraded = spec.clone();
    degraded.machines.accuracy_range = (0.3, 0.7);
    let result = sweep(&degraded).unwrap();
    let (good, bad) = (baseline.mean_savings(), result.mean_savings());
    outcome(
        bad < good,
        format!(
            "mean savings {:.1}% with U[0.5,0.95] vs {:.1}% with U[0.3,0.7], ratio {:.2}",
            100.0 * good,
            100.0 * bad,
            good / bad
        ),
    )
}

fn criterion_7(first: &SweepResult, spec: &SweepSpec) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_aggregate(&pa, first, false).unwrap();
    let second = sweep(spec).unwrap();
    write_aggregate(&pb, &second, false).unwrap();
    let (a, b) = (std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    outcome(
        a == b,
        format!("aggregate CSV {} bytes, identical {}", a.len(), a == b),
    )
}

fn main() {
    // Test discovery (`--list`) expects no output from a harness-less target.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!(
            "criterion {n}: {} - {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());

    let spec = SweepSpec::default();
    let start = Instant::now();
    let result = sweep(&spec).unwrap();
    let elapsed = start.elapsed();
    report(4, criterion_4(&spec, &result, elapsed));
    report(5, criterion_5(&result));
    report(6, criterion_6(&result, &spec));
    report(7, criterion_7(&result, &spec));

    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(n, _)| *n)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
