//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run alone with `cargo test -p voxanon --test acceptance`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxanon::anonymize::{
    anonymize_mcadams, mcadams_transform_poles, pitch_shift, sample_alpha, speaker_seed, AnonymizerSpec,
    McAdamsConfig, Pole,
};
use voxanon::audio_io::read_wav;
use voxanon::dsp::compute_psd;
use voxanon::experiment::{
    make_split, render_report, run_inversion_attack, run_sweep, synth_corpus, AgeGroup, Corpus, DatasetManifest,
    EvalOptions, Gender, Label, Report, ReportFormat, SpeakerRecord, SweepReport, SynthConfig, Task,
    UtteranceRecord,
};
use voxanon::metrics::{
    compute_auroc, compute_eer, identification_odds, pearson_r, statistical_parity_difference, unpaired_t_test,
    TrialScoreSet,
};
use voxanon::AudioClip;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn odds() -> Outcome {
    // published population sizes, EERs and odds
    let cases = [(2742u64, 4.02, 110u64), (1443, 2.96, 43), (1443, 30.24, 436), (78, 38.86, 30)];
    for (n, eer, expected) in cases {
        let got = identification_odds(n, eer).map_err(|e| e.to_string())?.odds_denominator;
        check(got == expected, format!("N={n} EER={eer}: 1:{got}, expected 1:{expected}"))?;
    }
    Ok("4/4 cases exact".into())
}

fn random_trials(rng: &mut ChaCha8Rng) -> TrialScoreSet {
    let n = rng.random_range(10..=500);
    let tied = rng.random_bool(0.5);
    loop {
        let mut set = TrialScoreSet::default();
        for _ in 0..n {
            let label = rng.random_bool(0.5);
            let mut s: f64 = rng.random::<f64>() + if label { 0.3 } else { 0.0 };
            if tied {
                s = (s * 8.0).round() / 8.0;
            }
            set.push(s, label, None);
        }
        let (p, q) = set.counts();
        if p > 0 && q > 0 {
            return set;
        }
    }
}

/// Rates at every candidate threshold by direct counting, then the linear
/// crossing of FAR and FRR.
fn brute_force_eer(t: &TrialScoreSet) -> f64 {
    let mut thresholds: Vec<f64> = t.scores.clone();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let (n_pos, n_neg) = t.counts();
    let rates = |th: f64| {
        let mut fa = 0;
        let mut fr = 0;
        for (&s, &l) in t.scores.iter().zip(&t.labels) {
            if l && s < th {
                fr += 1;
            }
            if !l && s >= th {
                fa += 1;
            }
        }
        (100.0 * fa as f64 / n_neg as f64, 100.0 * fr as f64 / n_pos as f64)
    };
    let mut prev = rates(thresholds[0]);
    if prev.0 <= prev.1 {
        return prev.0;
    }
    for &th in &thresholds[1..] {
        let cur = rates(th);
        if cur.0 <= cur.1 {
            if cur.0 == cur.1 {
                return cur.0;
            }
            let (da, db) = (prev.0 - prev.1, cur.0 - cur.1);
            let lam = da / (da - db);
            return prev.0 + lam * (cur.0 - prev.0);
        }
        prev = cur;
    }
    unreachable!("FAR reaches 0 at +inf")
}

fn eer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let t = random_trials(&mut rng);
        let got = compute_eer(&t).map_err(|e| e.to_string())?.eer_percent;
        let want = brute_force_eer(&t);
        worst = worst.max((got - want).abs());
        check((got - want).abs() <= 1e-9, format!("set {i}: {got} vs brute force {want}"))?;
    }
    Ok(format!("1000 sets, max deviation {worst:.1e} points"))
}

fn pair_count_auroc(t: &TrialScoreSet) -> f64 {
    let pos: Vec<f64> = t.scores.iter().zip(&t.labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = t.scores.iter().zip(&t.labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    100.0 * wins / (pos.len() * neg.len()) as f64
}

fn auroc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let t = random_trials(&mut rng);
        let got = compute_auroc(&t).map_err(|e| e.to_string())?;
        let want = pair_count_auroc(&t);
        worst = worst.max((got - want).abs() / 100.0);
        check((got - want).abs() / 100.0 <= 1e-12, format!("set {i}: {got} vs pair count {want}"))?;
        let flipped = compute_auroc(&t.flipped()).map_err(|e| e.to_string())?;
        check(got + flipped == 100.0, format!("set {i}: {got} + {flipped} != 100"))?;
    }
    Ok(format!("1000 sets, max deviation {worst:.1e}, flips sum to 100 exactly"))
}

fn interior_correlation(clip: &AudioClip, alpha: f64) -> Result<f64, String> {
    let out = anonymize_mcadams(clip, &McAdamsConfig::default(), alpha).map_err(|e| e.to_string())?;
    check(out.len() == clip.len(), "length changed")?;
    // drop one analysis frame at each edge
    let edge = (clip.sample_rate as usize) / 50;
    let range = edge..clip.len() - edge;
    Ok(pearson(&clip.samples[range.clone()], &out.samples[range]))
}

fn mcadams_identity() -> Outcome {
    let corpus = synth_corpus(&SynthConfig {
        n_speakers: 6,
        utterances_per_speaker: 2,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let mut worst = f64::INFINITY;
    for clip in &corpus.audio {
        let r = interior_correlation(clip, 1.0)?;
        worst = worst.min(r);
        check(r >= 0.99, format!("synthetic {:?}: r = {r}", clip.source_id))?;
    }
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/arctic_a0007.wav");
    let real = read_wav(path).map_err(|e| e.to_string())?;
    let r = interior_correlation(&real, 1.0)?;
    check(r >= 0.99, format!("real speech: r = {r}"))?;
    Ok(format!("{} synthetic clips min r {worst:.4}, real speech r {r:.4}", corpus.audio.len()))
}

fn pole_math() -> Outcome {
    let out = mcadams_transform_poles(&[Pole { radius: 0.95, angle: PI / 4.0 }], 0.8, 1e-3);
    let want = (PI / 4.0).powf(0.8);
    check((out[0].angle - want).abs() <= 1e-9, format!("angle {} vs {want}", out[0].angle))?;
    check(out[0].radius == 0.95, "radius changed")?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..10_000 {
        let mut poles = Vec::new();
        for _ in 0..rng.random_range(1..=10) {
            let radius = rng.random_range(0.0..0.999);
            let angle = rng.random_range(0.0..PI);
            poles.push(Pole { radius, angle });
            poles.push(Pole { radius, angle: -angle });
        }
        for _ in 0..rng.random_range(0..=2) {
            let angle = if rng.random_bool(0.5) { 0.0 } else { PI };
            poles.push(Pole { radius: rng.random_range(0.0..0.999), angle });
        }
        let alpha = rng.random_range(0.5..=1.0);
        let out = mcadams_transform_poles(&poles, alpha, 1e-3);
        check(out.len() == poles.len(), format!("set {i}: pole count changed"))?;
        for p in &out {
            check(p.radius < 1.0, format!("set {i}: unstable pole {p:?}"))?;
            let z = p.to_complex();
            let partners = out
                .iter()
                .filter(|q| {
                    let w = q.to_complex();
                    (w.re - z.re).abs() < 1e-12 && (w.im + z.im).abs() < 1e-12
                })
                .count();
            check(partners >= 1, format!("set {i}: {p:?} has no conjugate"))?;
        }
    }
    Ok(format!("angle {:.12} = (pi/4)^0.8; 10000 sets stable and conjugate-closed", out[0].angle))
}

fn sweep_report(corpus: &Corpus, jobs: Option<usize>) -> Result<(SweepReport, Vec<u8>), String> {
    let alphas = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    let opts = EvalOptions {
        jobs,
        ..Default::default()
    };
    let r = run_sweep(corpus, &alphas, &McAdamsConfig::default(), 42, &opts).map_err(|e| e.to_string())?;
    let config = serde_json::json!({"alphas": alphas, "seed": 42});
    let report = Report::new("sweep", 42, config, r.clone());
    let mut bytes = render_report(&report, ReportFormat::Json).map_err(|e| e.to_string())?;
    bytes.extend(render_report(&report, ReportFormat::Csv).map_err(|e| e.to_string())?);
    Ok((r, bytes))
}

fn privacy_direction(r: &SweepReport) -> Outcome {
    let eers: Vec<f64> = r.rows.iter().map(|row| row.eer_percent).collect();
    let column = eers.iter().map(|e| format!("{e:.2}")).collect::<Vec<_>>().join(" > ");
    check(eers.windows(2).all(|w| w[0] > w[1]), format!("not strictly decreasing: {eers:?}"))?;
    check(eers[0] >= 3.0 * eers[5], format!("EER(0.5) {} < 3 x EER(1.0) {}", eers[0], eers[5]))?;
    Ok(format!("EER {column}"))
}

fn alpha_range() -> Outcome {
    let cfg = McAdamsConfig::default();
    let draws: Vec<f64> = (0..10_000)
        .map(|i| sample_alpha(speaker_seed(42, &format!("spk{i:05}"), "test"), &cfg))
        .collect();
    check(draws.iter().all(|a| (0.75..=0.90).contains(a)), "draw outside [0.75, 0.90]")?;
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    check((mean - 0.825).abs() <= 0.005, format!("mean {mean}"))?;
    Ok(format!("10000 draws in range, mean {mean:.4}"))
}

fn sine(freq: f64, secs: f64) -> AudioClip {
    let sr = 16000;
    let n = (secs * sr as f64) as usize;
    AudioClip::new((0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin()).collect(), sr)
}

fn pitch_law() -> Outcome {
    let clip = sine(220.0, 2.0);
    let up = pitch_shift(&clip, 12.0).map_err(|e| e.to_string())?;
    let f = compute_psd(&up, 8192).map_err(|e| e.to_string())?.dominant_frequency();
    check((f - 440.0).abs() / 440.0 <= 0.02, format!("+12 st peak at {f} Hz"))?;
    let same = pitch_shift(&clip, 0.0).map_err(|e| e.to_string())?;
    let r = pearson(&clip.samples, &same.samples);
    check(r >= 0.99, format!("0 st correlation {r}"))?;
    Ok(format!("+12 st peak {f:.1} Hz, 0 st r {r:.4}"))
}

fn inversion(corpus: &Corpus) -> Outcome {
    let spec = AnonymizerSpec::McAdams(McAdamsConfig::default());
    let r = run_inversion_attack(corpus, &spec, 42, &EvalOptions::default()).map_err(|e| e.to_string())?;
    let summary = format!("original {:.2} < inverse {:.2} < naive {:.2}", r.eer_original, r.eer_inverse, r.eer_naive);
    check(r.eer_inverse < r.eer_naive && r.eer_inverse > r.eer_original, summary.clone())?;
    Ok(summary)
}

fn split_manifest() -> DatasetManifest {
    let mut speakers = Vec::new();
    let mut utterances = Vec::new();
    for (label, n) in [(Label::Control, 81), (Label::Dysarthria, 542)] {
        for i in 0..n {
            let id = format!("{label}{i:03}");
            utterances.push(UtteranceRecord {
                utterance_id: format!("{id}_0"),
                speaker_id: id.clone(),
                path: format!("{id}.wav").into(),
            });
            speakers.push(SpeakerRecord {
                speaker_id: id,
                gender: if i % 2 == 0 { Gender::Female } else { Gender::Male },
                age_group: AgeGroup::Adult,
                label,
            });
        }
    }
    DatasetManifest::new(speakers, utterances).expect("valid manifest")
}

fn split() -> Outcome {
    let m = split_manifest();
    let task = Task::Disorder(Label::Dysarthria);
    let mut sizes = BTreeSet::new();
    for seed in 0..20 {
        let a = make_split(&m, task, seed).map_err(|e| e.to_string())?;
        let b = make_split(&m, task, seed).map_err(|e| e.to_string())?;
        check(a == b, format!("seed {seed} not deterministic"))?;
        check(a.train.is_disjoint(&a.test), format!("seed {seed}: train and test overlap"))?;
        check(a.train.len().abs_diff(168) <= 2, format!("seed {seed}: {} training speakers", a.train.len()))?;
        sizes.insert(a.train.len());
    }
    check(
        make_split(&m, task, 0).unwrap().train != make_split(&m, task, 1).unwrap().train,
        "seed has no effect",
    )?;
    Ok(format!("training sizes {sizes:?} over 20 seeds"))
}

/// Two-tailed Student-t p-value by Simpson integration of the density.
fn t_pvalue_df8(t: f64) -> f64 {
    // Gamma(9/2) / (sqrt(8 pi) Gamma(4)) with Gamma(9/2) = 105 sqrt(pi) / 16
    let c = 105.0 / (16.0 * 6.0 * 8f64.sqrt());
    let f = |x: f64| c * (1.0 + x * x / 8.0).powf(-4.5);
    let n = 2000;
    let h = t.abs() / n as f64;
    let mut s = f(0.0) + f(t.abs());
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    1.0 - 2.0 * s * h / 3.0
}

fn statistics() -> Outcome {
    // pooled variance 2.5, standard error 1
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 3.0, 4.0, 5.0, 6.0];
    let t = unpaired_t_test(&a, &b).map_err(|e| e.to_string())?;
    let p_want = t_pvalue_df8(-1.0);
    check((t.t + 1.0).abs() <= 1e-9, format!("t = {}", t.t))?;
    check((t.p - p_want).abs() <= 1e-3, format!("t-test p {} vs {p_want}", t.p))?;

    // sxy = 3, sxx = 2, syy = 14/3; one degree of freedom, so p has the
    // Cauchy closed form 1 - 2 atan(|t|) / pi
    let r = pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).map_err(|e| e.to_string())?;
    let r_want = 3.0 / (28.0f64 / 3.0).sqrt();
    let t1 = r_want / (1.0 - r_want * r_want).sqrt();
    let p_want_r = 1.0 - 2.0 * t1.atan() / PI;
    check((r.r - r_want).abs() <= 1e-9, format!("r {} vs {r_want}", r.r))?;
    check((r.p - p_want_r).abs() <= 1e-3, format!("pearson p {} vs {p_want_r}", r.p))?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let (x, y) = (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
        let (d, e) = (statistical_parity_difference(x, y), statistical_parity_difference(y, x));
        check(d == -e, format!("PtD({x}, {y}) = {d} but reversed {e}"))?;
    }
    Ok(format!(
        "t {:.6} p {:.6} (oracle {p_want:.6}); r {:.6} p {:.6} (oracle {p_want_r:.6}); PtD antisymmetric",
        t.t, t.p, r.r, r.p
    ))
}

fn main() {
    let started = Instant::now();
    let corpus = synth_corpus(&SynthConfig {
        n_speakers: 20,
        seed: 42,
        ..Default::default()
    })
    .expect("synthetic corpus");

    let mut sweep_bytes = None;
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let outcome = f();
        let secs = t0.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("[{tag}] {id:>2} {name}: {detail} ({secs:.1} s)");
        results.push((id, name, outcome));
    };

    run(1, "identification odds", &mut odds);
    run(2, "EER oracle equivalence", &mut eer_oracle);
    run(3, "AUROC oracle and label flip", &mut auroc_oracle);
    run(4, "McAdams identity reconstruction", &mut mcadams_identity);
    run(5, "McAdams pole math", &mut pole_math);
    run(6, "privacy direction of the sweep", &mut || {
        let (r, bytes) = sweep_report(&corpus, None)?;
        sweep_bytes = Some(bytes);
        privacy_direction(&r)
    });
    run(7, "randomized coefficient range", &mut alpha_range);
    run(8, "pitch-shift frequency law", &mut pitch_law);
    run(9, "inversion attack direction", &mut || inversion(&corpus));
    run(10, "split reproduction", &mut split);
    run(11, "statistics oracles", &mut statistics);
    run(12, "end-to-end determinism", &mut || {
        let first = match &sweep_bytes {
            Some(b) => b.clone(),
            None => sweep_report(&corpus, None)?.1,
        };
        let one = sweep_report(&corpus, Some(1))?.1;
        let two = sweep_report(&corpus, Some(2))?.1;
        check(first == one && one == two, "sweep reports differ between runs")?;
        Ok(format!("3 sweeps (jobs default, 1, 2) byte-identical, {} bytes", first.len()))
    });

    let failed: Vec<_> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "{} of {} criteria passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
